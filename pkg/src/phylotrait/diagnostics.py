"""MCMC output diagnostics: effective sample size, HPD intervals, PSRF."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def ess(series: np.ndarray) -> float:
    """Effective sample size n / (1 + 2 sum rho_t) with Geyer truncation.

    Autocorrelations are summed in consecutive pairs until the first pair
    with a non-positive sum (the initial-positive-sequence estimator).
    A constant series has ESS defined as 1.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise DataError("ess expects a 1-D series")
    n = x.size
    if n < 10:
        raise DataError("ess needs at least 10 samples")
    x = x - x.mean()
    gamma0 = float(x @ x) / n
    if gamma0 <= 0 or not np.isfinite(gamma0):
        return 1.0
    # autocovariances via FFT, biased (1/n) normalization
    nfft = int(2 ** np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / gamma0
    tau = 0.0  # running sum of Gamma_k = rho_{2k} + rho_{2k+1}
    k = 0
    while 2 * k + 1 < n:
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair <= 0:
            break
        tau += pair
        k += 1
    iact = max(2.0 * tau - 1.0, 1e-12)
    return float(min(n / iact, n * 10.0))


def hpd_interval(samples: np.ndarray, mass: float = 0.95) -> tuple[float, float]:
    """Narrowest interval containing the given posterior mass."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise DataError("empty sample")
    k = max(int(np.ceil(mass * n)), 1)
    if k >= n:
        return float(x[0]), float(x[-1])
    widths = x[k:] - x[: n - k]
    j = int(np.argmin(widths))
    return float(x[j]), float(x[j + k])


def gelman_rubin(chains: list[np.ndarray]) -> float:
    """Potential scale reduction factor across chains of equal length."""
    arr = np.asarray([np.asarray(c, dtype=float) for c in chains])
    m, n = arr.shape
    if m < 2 or n < 2:
        raise DataError("need >= 2 chains of length >= 2")
    means = arr.mean(axis=1)
    between = n * means.var(ddof=1)
    within = arr.var(axis=1, ddof=1).mean()
    if within == 0:
        return 1.0
    var_hat = (n - 1) / n * within + between / n
    return float(np.sqrt(var_hat / within))
