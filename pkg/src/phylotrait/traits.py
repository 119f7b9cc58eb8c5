"""Trait matrix ingestion, tree alignment, and preprocessing transforms."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .tree import Phylogeny


@dataclass(frozen=True)
class TraitMatrix:
    """N-by-q trait measurements with an observed/missing mask.

    ``values`` holds NaN at masked cells so that any accidental use of a
    missing measurement poisons downstream results instead of passing
    silently.  ``mask`` is True where a cell is observed.
    """

    values: np.ndarray
    mask: np.ndarray
    taxon_names: tuple[str, ...]
    trait_names: tuple[str, ...]

    def __post_init__(self):
        if self.values.shape != self.mask.shape:
            raise DataError("values and mask shapes differ")
        if self.values.shape != (len(self.taxon_names), len(self.trait_names)):
            raise DataError("name lists do not match matrix shape")
        if len(set(self.taxon_names)) != len(self.taxon_names):
            raise DataError("duplicate taxon names")
        self.values.setflags(write=False)
        self.mask.setflags(write=False)

    @property
    def n_taxa(self) -> int:
        return self.values.shape[0]

    @property
    def n_traits(self) -> int:
        return self.values.shape[1]

    def observed_counts(self) -> np.ndarray:
        """Number of observed cells per trait."""
        return self.mask.sum(axis=0)

    def missing_fraction(self) -> float:
        return 1.0 - self.mask.mean()

    def filled(self, fill: float = 0.0) -> np.ndarray:
        """Values with masked cells replaced by ``fill`` (default 0)."""
        return np.where(self.mask, np.nan_to_num(self.values, nan=0.0), fill)


def make_trait_matrix(values, mask, taxon_names, trait_names) -> TraitMatrix:
    """Build a TraitMatrix, forcing NaN into masked cells."""
    values = np.array(values, dtype=float)
    mask = np.array(mask, dtype=bool)
    values[~mask] = np.nan
    return TraitMatrix(values, mask, tuple(taxon_names), tuple(trait_names))


def read_trait_csv(path, missing_token: str = "NA") -> TraitMatrix:
    """Read a trait CSV with header ``taxon,<trait1>,...,<traitq>``.

    A cell equal to ``missing_token`` (after trimming whitespace) or empty
    is treated as missing.  RFC-4180 quoting is honoured via the stdlib
    csv reader.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2:
            raise DataError(f"{path}: header must name a taxon column and at least one trait")
        trait_names = [h.strip() for h in header[1:]]
        taxa: list[str] = []
        rows: list[list[float]] = []
        masks: list[list[bool]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}"
                )
            taxon = row[0].strip()
            if taxon in taxa:
                raise DataError(f"{path}:{lineno}: duplicate taxon {taxon!r}")
            taxa.append(taxon)
            vals, obs = [], []
            for col, cell in enumerate(row[1:], start=2):
                cell = cell.strip()
                if cell == missing_token or cell == "":
                    vals.append(math.nan)
                    obs.append(False)
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in column {col}"
                    ) from None
                obs.append(True)
            rows.append(vals)
            masks.append(obs)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return make_trait_matrix(rows, masks, taxa, trait_names)


def align_to_tree(tm: TraitMatrix, tree: Phylogeny) -> TraitMatrix:
    """Reorder rows to tree tip order; taxa and tips must match bijectively."""
    have = set(tm.taxon_names)
    want = set(tree.tip_labels)
    if have != want:
        missing = sorted(want - have)
        extra = sorted(have - want)
        parts = []
        if missing:
            parts.append(f"tree tips without data: {missing}")
        if extra:
            parts.append(f"data taxa not on tree: {extra}")
        raise DataError("; ".join(parts))
    lookup = {name: i for i, name in enumerate(tm.taxon_names)}
    order = [lookup[lab] for lab in tree.tip_labels]
    return make_trait_matrix(
        tm.values[order], tm.mask[order], tree.tip_labels, tm.trait_names
    )


def transform(
    tm: TraitMatrix,
    per_trait: str | list[str] = "none",
    standardize: bool = False,
) -> TraitMatrix:
    """Apply per-trait transforms ({none, log, logit}) and optional standardization.

    Transforms act on observed cells only; the mask is never altered.
    Standardization centers each column to mean 0 and scales to sample
    standard deviation 1 (n-1 divisor) over its observed cells.
    """
    if isinstance(per_trait, str):
        specs = [per_trait] * tm.n_traits
    else:
        specs = list(per_trait)
        if len(specs) != tm.n_traits:
            raise DataError("one transform spec per trait required")
    vals = np.array(tm.values, dtype=float)
    for j, spec in enumerate(specs):
        col = vals[:, j]
        obs = tm.mask[:, j]
        if spec == "none":
            continue
        if spec == "log":
            if np.any(col[obs] <= 0):
                raise DataError(f"trait {tm.trait_names[j]!r}: log needs positive values")
            col[obs] = np.log(col[obs])
        elif spec == "logit":
            if np.any((col[obs] <= 0) | (col[obs] >= 1)):
                raise DataError(f"trait {tm.trait_names[j]!r}: logit needs values in (0,1)")
            col[obs] = np.log(col[obs] / (1.0 - col[obs]))
        else:
            raise DataError(f"unknown transform {spec!r}")
    if standardize:
        for j in range(tm.n_traits):
            obs = tm.mask[:, j]
            x = vals[obs, j]
            if x.size < 2:
                raise DataError(
                    f"trait {tm.trait_names[j]!r}: standardization needs >= 2 observed cells"
                )
            sd = x.std(ddof=1)
            if sd == 0:
                raise DataError(f"trait {tm.trait_names[j]!r}: constant column")
            vals[obs, j] = (x - x.mean()) / sd
    return make_trait_matrix(vals, tm.mask, tm.taxon_names, tm.trait_names)
