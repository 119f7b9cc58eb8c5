"""Sample-log schema, TSV writer/reader, and posterior summaries.

The log is tab-separated with '#'-prefixed metadata lines, one row per
recorded state.  Floats are written with 17 significant digits so that a
round trip through the file is exact, and nothing non-deterministic (wall
clock, hostnames) enters the file: identical seeds give identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .diagnostics import ess, hpd_interval
from .errors import DataError
from .likelihood import RESIDUAL


def _upper_triangle_names(prefix: str, q: int, diagonal: bool = True) -> list[str]:
    names = []
    for j in range(q):
        for k in range(j if diagonal else j + 1, q):
            names.append(f"{prefix}_{j + 1}_{k + 1}")
    return names


def log_columns(q: int, link_kind: str) -> list[str]:
    """Column set: a pure function of (q, link kind)."""
    cols = ["state", "log_likelihood"]
    cols += _upper_triangle_names("sigma", q)
    cols += _upper_triangle_names("corr", q, diagonal=False)
    if link_kind == RESIDUAL:
        cols += _upper_triangle_names("gamma", q)
        cols += _upper_triangle_names("h", q)
        cols += _upper_triangle_names("sx", q)
    return cols


def upper_triangle(mat: np.ndarray, diagonal: bool = True) -> list[float]:
    q = mat.shape[0]
    return [mat[j, k] for j in range(q) for k in range(j if diagonal else j + 1, q)]


def correlation_from_covariance(sigma: np.ndarray) -> np.ndarray:
    sd = np.sqrt(np.diag(sigma))
    return sigma / np.outer(sd, sd)


def format_row(values: list[float]) -> str:
    return "\t".join(f"{v:.17g}" for v in values)


def write_log(path, meta: dict, columns: list[str], rows: list[list[float]]):
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(meta):
            fh.write(f"# {key}={json.dumps(meta[key], sort_keys=True)}\n")
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write(format_row(row) + "\n")


def read_log(path) -> tuple[dict, list[str], np.ndarray]:
    meta: dict = {}
    columns: list[str] | None = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, val = body.partition("=")
                    try:
                        meta[key.strip()] = json.loads(val)
                    except json.JSONDecodeError:
                        meta[key.strip()] = val
                continue
            if columns is None:
                columns = line.split("\t")
                continue
            rows.append([float(tok) for tok in line.split("\t")])
    if columns is None:
        raise DataError(f"{path}: no header row")
    data = np.array(rows, dtype=float) if rows else np.zeros((0, len(columns)))
    return meta, columns, data


@dataclass(frozen=True)
class ColumnSummary:
    name: str
    mean: float
    hpd_low: float
    hpd_high: float
    ess: float
    sign_probability: float | None  # correlations only


def summarize_samples(
    columns: list[str], data: np.ndarray, burn_in: float = 0.1
) -> list[ColumnSummary]:
    """Posterior means, 95% HPD intervals, per-column ESS and correlation
    sign probabilities, computed after dropping the burn-in fraction."""
    if not 0 <= burn_in < 1:
        raise DataError("burn-in fraction must lie in [0, 1)")
    start = int(np.floor(burn_in * data.shape[0]))
    kept = data[start:]
    out = []
    for j, name in enumerate(columns):
        if name == "state":
            continue
        col = kept[:, j]
        if np.all(np.isnan(col)):
            out.append(ColumnSummary(name, np.nan, np.nan, np.nan, np.nan, None))
            continue
        lo, hi = hpd_interval(col)
        col_ess = ess(col) if col.size >= 10 else float("nan")
        sign_p = None
        if name.startswith("corr_"):
            mean_sign = np.sign(np.mean(col)) or 1.0
            sign_p = float(np.mean(np.sign(col) == mean_sign))
        out.append(ColumnSummary(name, float(np.mean(col)), lo, hi, col_ess, sign_p))
    return out


def render_summary(summaries: list[ColumnSummary]) -> str:
    lines = [
        f"{'parameter':<16}{'mean':>14}{'hpd95_low':>14}{'hpd95_high':>14}{'ess':>10}{'p_same_sign':>13}"
    ]
    for s in summaries:
        sign = f"{s.sign_probability:.3f}" if s.sign_probability is not None else ""
        lines.append(
            f"{s.name:<16}{s.mean:>14.6g}{s.hpd_low:>14.6g}{s.hpd_high:>14.6g}"
            f"{s.ess:>10.1f}{sign:>13}"
        )
    return "\n".join(lines)
