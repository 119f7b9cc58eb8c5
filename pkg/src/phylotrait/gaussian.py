"""Pseudo-precision algebra for Gaussian messages with exact and missing traits.

Each trait coordinate of a message carries one of three precision classes:

* ``INFINITE`` -- the value is known exactly (a directly observed tip trait);
* ``FINITE``   -- the value is latent with a known SPD precision block;
* ``ZERO``     -- no information at all (a missing trait).

A pseudo-precision is then ``Pi diag(inf*I, B, 0*I) Pi^T`` for a permutation
``Pi`` and SPD block ``B``; cross terms between classes are zero by
construction.  Infinity is never stored as a floating value: it is a label,
and every infinite block is eliminated symbolically by branch deflation
before any density or determinant is evaluated numerically.

The pseudo-inverse swaps the INFINITE and ZERO classes and inverts the
finite block.  The pseudo-determinant is the product of non-zero singular
values, which after deflation is just the finite block's determinant.
Branch deflation propagates a message across a branch of length t with
per-unit-time covariance Sigma:

    Q = (P^- + t D Sigma D)^-

with D the non-missing indicator; on the non-zero coordinates this reduces
to inverting  T = [[t*S_oo, t*S_ol], [t*S_lo, B^-1 + t*S_ll]]  (o = infinite
coordinates, l = finite ones), the sum of a positive-definite and a
positive-semidefinite matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ContractViolation, NumericalError

LOG_2PI = float(np.log(2.0 * np.pi))

ZERO, FINITE, INFINITE = 0, 1, 2
_LABEL_NAMES = {ZERO: "Zero", FINITE: "Finite", INFINITE: "Infinite"}


def symmetrize(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2.0


def spd_factor(a: np.ndarray):
    """Cholesky factorization, raising NumericalError on failure."""
    try:
        return cho_factor(a, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"matrix is not positive definite: {exc}") from exc


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[0] == 0:
        return np.zeros_like(b)
    return cho_solve(spd_factor(a), b)


def spd_inverse(a: np.ndarray) -> np.ndarray:
    """Inverse via SPD factorization, symmetrized to suppress drift."""
    n = a.shape[0]
    if n == 0:
        return a.copy()
    return symmetrize(cho_solve(spd_factor(a), np.eye(n)))


def spd_logdet(a: np.ndarray) -> float:
    if a.shape[0] == 0:
        return 0.0
    c, _ = spd_factor(a)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def is_spd(a: np.ndarray, rel_tol: float = 1e-10) -> bool:
    """Symmetric with smallest eigenvalue > -rel_tol * largest."""
    if a.shape[0] == 0:
        return True
    if not np.allclose(a, a.T, rtol=0, atol=1e-8 * (1 + np.abs(a).max())):
        return False
    w = np.linalg.eigvalsh(symmetrize(a))
    return w[0] > -rel_tol * max(w[-1], 1e-300)


@dataclass(frozen=True)
class PseudoPrecision:
    """Block-structured precision with Infinite/Finite/Zero trait classes.

    ``labels`` is a length-q int8 array over {ZERO, FINITE, INFINITE};
    ``finite_block`` is the SPD matrix over the FINITE coordinates, in
    increasing coordinate order.
    """

    labels: np.ndarray
    finite_block: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8)
        object.__setattr__(self, "labels", labels)
        nf = int(np.sum(labels == FINITE))
        if self.finite_block.shape != (nf, nf):
            raise ContractViolation("finite_block shape does not match FINITE labels")
        labels.setflags(write=False)
        self.finite_block.setflags(write=False)

    @property
    def q(self) -> int:
        return self.labels.size

    @property
    def finite_idx(self) -> np.ndarray:
        return np.flatnonzero(self.labels == FINITE)

    @property
    def support(self) -> np.ndarray:
        """Boolean mask of non-Zero coordinates."""
        return self.labels != ZERO

    @property
    def effective_dim(self) -> int:
        return int(np.sum(self.labels != ZERO))

    def has_infinite(self) -> bool:
        return bool(np.any(self.labels == INFINITE))

    def dense(self) -> np.ndarray:
        """Dense matrix with zeros off the finite block; requires no INFINITE labels."""
        if self.has_infinite():
            raise ContractViolation("cannot densify a precision with Infinite labels")
        out = np.zeros((self.q, self.q))
        idx = self.finite_idx
        out[np.ix_(idx, idx)] = self.finite_block
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """P @ x treating Zero coordinates as zero; requires no INFINITE labels."""
        if self.has_infinite():
            raise ContractViolation("matvec with Infinite labels")
        out = np.zeros(self.q)
        idx = self.finite_idx
        if idx.size:
            out[idx] = self.finite_block @ x[idx]
        return out

    def quad(self, x: np.ndarray) -> float:
        """x^T P x over the finite coordinates."""
        idx = self.finite_idx
        if not idx.size:
            return 0.0
        v = x[idx]
        return float(v @ self.finite_block @ v)


def all_zero(q: int) -> PseudoPrecision:
    return PseudoPrecision(np.full(q, ZERO, dtype=np.int8), np.zeros((0, 0)))


def pseudo_inverse(p: PseudoPrecision, max_cond: float = 1e12) -> PseudoPrecision:
    """Swap Infinite and Zero classes and invert the finite block.

    An involution by construction.  Raises NumericalError when the finite
    block's condition number exceeds ``max_cond``.
    """
    labels = p.labels.copy()
    labels[p.labels == INFINITE] = ZERO
    labels[p.labels == ZERO] = INFINITE
    block = p.finite_block
    if block.shape[0]:
        cond = np.linalg.cond(block)
        if not np.isfinite(cond) or cond > max_cond:
            raise NumericalError(f"finite block ill-conditioned (cond={cond:.3g})")
    return PseudoPrecision(labels, spd_inverse(block))


def pseudo_det(p: PseudoPrecision) -> float:
    """Log pseudo-determinant: log det of the finite block (empty -> 0).

    Infinite labels are a contract violation; callers must deflate first.
    """
    if p.has_infinite():
        raise ContractViolation("pseudo_det with Infinite labels")
    return spd_logdet(p.finite_block)


def degenerate_logdensity(x: np.ndarray, mean: np.ndarray, p: PseudoPrecision) -> float:
    """Log of the possibly degenerate MVN density phi(x; mean, P).

    Equals  0.5 log det~(P) - (dim~/2) log 2pi - 0.5 (x-m)^T P (x-m),  with
    the quadratic form over the Finite coordinates only.  Zero coordinates
    contribute nothing; Infinite labels are rejected.
    """
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if x.shape != (p.q,) or mean.shape != (p.q,):
        raise ContractViolation("x/mean length must equal q")
    return 0.5 * pseudo_det(p) - 0.5 * p.effective_dim * LOG_2PI - 0.5 * p.quad(x - mean)


@dataclass(frozen=True)
class Message:
    """Per-node partial-likelihood state (log remainder, mean, pseudo-precision).

    Mean entries at Zero coordinates are pinned to 0.  ``support`` mirrors
    the precision's non-Zero coordinates: true where any data exists below.
    """

    log_remainder: float
    mean: np.ndarray
    precision: PseudoPrecision

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        if mean.shape != (self.precision.q,):
            raise ContractViolation("mean length must equal q")
        mean = np.where(self.precision.support, mean, 0.0)
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)

    @property
    def support(self) -> np.ndarray:
        return self.precision.support


def branch_deflate(msg: Message, t: float, sigma: np.ndarray) -> Message:
    """Propagate a message across a branch: Q = (P^- + t D Sigma D)^-.

    All Infinite labels become Finite; Zero labels, the mean, and the
    remainder are unchanged.  Requires t > 0 so that the T matrix stays
    positive definite when Infinite labels are present.
    """
    if t <= 0:
        raise ContractViolation("branch_deflate requires t > 0")
    p = msg.precision
    supp = np.flatnonzero(p.support)
    if supp.size == 0:
        return msg
    t_mat = t * sigma[np.ix_(supp, supp)]
    fin_pos = np.flatnonzero(p.labels[supp] == FINITE)
    if fin_pos.size:
        t_mat = t_mat.copy()
        t_mat[np.ix_(fin_pos, fin_pos)] += spd_inverse(p.finite_block)
    labels = np.where(p.support, FINITE, ZERO).astype(np.int8)
    block = spd_inverse(symmetrize(t_mat))
    return Message(msg.log_remainder, msg.mean, PseudoPrecision(labels, block))
