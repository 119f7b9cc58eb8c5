"""Sampler efficiency comparison: ESS/hour, ESS/sample, samples/hour."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .diagnostics import ess
from .runner import ChainResult


@dataclass
class EfficiencyRow:
    sampler: str
    min_ess_per_hour: float
    med_ess_per_hour: float
    min_ess_per_sample: float
    med_ess_per_sample: float
    samples_per_hour: float
    elapsed_seconds: float


def parameter_columns(columns: list[str]) -> list[int]:
    """Indices of the parameters of interest (everything except bookkeeping)."""
    skip = {"state", "log_likelihood"}
    return [j for j, name in enumerate(columns) if name not in skip]


def efficiency(result: ChainResult, burn_in: float = 0.1) -> EfficiencyRow:
    """Per-parameter ESS at the recorded states, scaled by wall time."""
    data = np.asarray(result.rows, dtype=float)
    start = int(np.floor(burn_in * data.shape[0]))
    kept = data[start:]
    if result.elapsed_seconds < 1.0:
        warnings.warn("run shorter than 1 s: wall-clock resolution is unreliable")
    ess_values = []
    for j in parameter_columns(result.columns):
        col = kept[:, j]
        if np.all(np.isnan(col)):
            continue
        ess_values.append(ess(col))
    ess_values = np.asarray(ess_values)
    hours = result.elapsed_seconds / 3600.0
    n_samples = kept.shape[0]
    return EfficiencyRow(
        sampler=result.sampler,
        min_ess_per_hour=float(ess_values.min() / hours),
        med_ess_per_hour=float(np.median(ess_values) / hours),
        min_ess_per_sample=float(ess_values.min() / n_samples),
        med_ess_per_sample=float(np.median(ess_values) / n_samples),
        samples_per_hour=float(n_samples / hours),
        elapsed_seconds=result.elapsed_seconds,
    )


def render_table(rows: list[EfficiencyRow]) -> str:
    header = (
        f"{'sampler':<12}{'ESS/hr min':>14}{'ESS/hr med':>14}"
        f"{'ESS/smp min':>14}{'ESS/smp med':>14}{'samples/hr':>14}{'seconds':>10}"
    )
    lines = [header]
    for r in rows:
        lines.append(
            f"{r.sampler:<12}{r.min_ess_per_hour:>14.4g}{r.med_ess_per_hour:>14.4g}"
            f"{r.min_ess_per_sample:>14.4g}{r.med_ess_per_sample:>14.4g}"
            f"{r.samples_per_hour:>14.4g}{r.elapsed_seconds:>10.2f}"
        )
    if len(rows) == 2:
        a, b = rows
        lines.append(
            f"{'speed-up':<12}{a.min_ess_per_hour / b.min_ess_per_hour:>14.4g}"
            f"{a.med_ess_per_hour / b.med_ess_per_hour:>14.4g}"
            f"{a.min_ess_per_sample / b.min_ess_per_sample:>14.4g}"
            f"{a.med_ess_per_sample / b.med_ess_per_sample:>14.4g}"
            f"{a.samples_per_hour / b.samples_per_hour:>14.4g}{'':>10}"
        )
    return "\n".join(lines)
