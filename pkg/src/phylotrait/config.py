"""Run configuration: TOML parsing, validation, canonical hashing."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class RunConfig:
    link: str = "degenerate"
    root_mean: list | float = 0.0
    root_sample_size: float = 1.0
    sigma_rate: list | float = 1.0
    sigma_df: float | None = None
    gamma_rate: list | float = 1.0
    gamma_df: float | None = None
    sigma: list | float | None = None  # evaluation point for `loglik`
    gamma: list | float | None = None
    chain_length: int = 10_000
    burn_in: float = 0.1
    thin: int = 1
    seed: int = 0
    sampler: str = "analytic"
    chains: int = 1
    random_scan: bool = False
    missing_token: str = "NA"
    transforms: list[str] | None = None
    standardize: bool = False
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.link not in ("degenerate", "residual"):
            raise ConfigError(f"model.link: unknown link {self.link!r}")
        if self.chain_length < 1:
            raise ConfigError("chain.length: must be >= 1")
        if not 0 <= self.burn_in < 1:
            raise ConfigError("chain.burn_in: must lie in [0, 1)")
        if self.chain_length * (1 - self.burn_in) < 1:
            raise ConfigError("chain.length: nothing left after burn-in")
        if self.thin < 1:
            raise ConfigError("chain.thin: must be >= 1")
        if self.chains < 1:
            raise ConfigError("chain.chains: must be >= 1")
        if self.sampler not in ("analytic", "baseline"):
            raise ConfigError(f"chain.sampler: unknown sampler {self.sampler!r}")
        return self

    def matrix(self, name: str, q: int, default_scale: float = 1.0) -> np.ndarray:
        """Resolve a scalar-or-matrix field to a q-by-q array."""
        value = getattr(self, name)
        if value is None:
            value = default_scale
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            return float(arr) * np.eye(q)
        if arr.shape != (q, q):
            raise ConfigError(f"{name}: expected a scalar or {q}x{q} matrix")
        return arr

    def df(self, name: str, q: int) -> float:
        value = getattr(self, name)
        return float(value) if value is not None else float(q + 1)

    def canonical_hash(self) -> str:
        payload = {k: v for k, v in self.__dict__.items() if k != "extra"}
        text = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:12]


_SECTION_FIELDS = {
    ("model", "link"): "link",
    ("model", "root_mean"): "root_mean",
    ("model", "root_sample_size"): "root_sample_size",
    ("model", "sigma"): "sigma",
    ("model", "gamma"): "gamma",
    ("priors", "sigma_rate"): "sigma_rate",
    ("priors", "sigma_df"): "sigma_df",
    ("priors", "gamma_rate"): "gamma_rate",
    ("priors", "gamma_df"): "gamma_df",
    ("chain", "length"): "chain_length",
    ("chain", "burn_in"): "burn_in",
    ("chain", "thin"): "thin",
    ("chain", "seed"): "seed",
    ("chain", "sampler"): "sampler",
    ("chain", "chains"): "chains",
    ("chain", "random_scan"): "random_scan",
    ("data", "missing_token"): "missing_token",
    ("transforms", "specs"): "transforms",
    ("transforms", "standardize"): "standardize",
}


def load_config(path: str | None) -> RunConfig:
    """Read a TOML run configuration; unknown keys are rejected by name."""
    cfg = RunConfig()
    if path is None:
        return cfg
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from None
    for section, table in raw.items():
        if not isinstance(table, dict):
            raise ConfigError(f"{path}: top-level key {section!r} must be a table")
        for key, value in table.items():
            target = _SECTION_FIELDS.get((section, key))
            if target is None:
                raise ConfigError(f"{path}: unknown field [{section}] {key}")
            setattr(cfg, target, value)
    return cfg
