"""Post-order observed-data log-likelihood for Brownian trait diffusion.

Reference per-node implementation, O(N q^3): initialize a Gaussian message
at every tip, deflate and combine messages up the tree, and integrate the
root message against the root prior MVN(mu0, Sigma/kappa).  The missing
measurements are marginalized exactly through the pseudo-precision algebra
in :mod:`phylotrait.gaussian`.

:mod:`phylotrait.engine` holds a level-batched implementation of the same
recursion for sampler hot loops; equivalence between the two is enforced
by the test suite.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DataError, NumericalError
from .gaussian import (
    FINITE,
    INFINITE,
    LOG_2PI,
    Message,
    PseudoPrecision,
    is_spd,
    pseudo_det,
    spd_inverse,
    spd_logdet,
    spd_solve,
    symmetrize,
)
from .traits import TraitMatrix
from .tree import Phylogeny

DEGENERATE = "degenerate"
RESIDUAL = "residual"


@dataclass(frozen=True)
class DiffusionModel:
    """Brownian diffusion covariance and root prior.

    ``sigma`` is the q-by-q per-unit-time trait covariance; the root trait
    value has prior MVN(root_mean, sigma / root_sample_size).
    """

    sigma: np.ndarray
    root_mean: np.ndarray
    root_sample_size: float

    def __post_init__(self):
        sigma = symmetrize(np.asarray(self.sigma, dtype=float))
        mean = np.atleast_1d(np.asarray(self.root_mean, dtype=float))
        if mean.size == 1 and sigma.shape[0] > 1:
            mean = np.full(sigma.shape[0], mean[0])
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "root_mean", mean)
        if sigma.shape != (mean.size, mean.size):
            raise DataError("sigma/root_mean dimensions differ")
        if self.root_sample_size <= 0:
            raise DataError("root sample size must be positive")
        if not is_spd(sigma):
            raise NumericalError("sigma must be symmetric positive definite")

    @property
    def q(self) -> int:
        return self.sigma.shape[0]


@dataclass(frozen=True)
class TipLink:
    """Stochastic link between tip data and latent tip traits.

    ``kind`` is "degenerate" (Z_i = X_i exactly) or "residual"
    (Z_i ~ MVN(X_i, Gamma^-1) with SPD residual precision Gamma).
    """

    kind: str
    residual_precision: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (DEGENERATE, RESIDUAL):
            raise DataError(f"unknown link kind {self.kind!r}")
        if self.kind == RESIDUAL:
            if self.residual_precision is None:
                raise DataError("residual link needs a residual precision")
            gamma = symmetrize(np.asarray(self.residual_precision, dtype=float))
            object.__setattr__(self, "residual_precision", gamma)
            if not is_spd(gamma):
                raise NumericalError("residual precision must be SPD")
        elif self.residual_precision is not None:
            raise DataError("degenerate link takes no residual precision")

    def residual_variance(self) -> np.ndarray:
        if self.kind == DEGENERATE:
            raise ContractViolation("degenerate link has no residual variance")
        return spd_inverse(self.residual_precision)


def init_tip_message(
    values_row: np.ndarray,
    mask_row: np.ndarray,
    link: TipLink,
    residual_variance: np.ndarray | None = None,
) -> Message:
    """Initial message at a tip: r = 1, mean = observations padded with 0.

    Degenerate link: observed coordinates are Infinite, missing are Zero.
    Residual link: observed coordinates are Finite with precision equal to
    the inverse of the residual variance restricted to them (the exact
    marginal of the observed sub-vector), missing are Zero.
    """
    mask_row = np.asarray(mask_row, dtype=bool)
    q = mask_row.size
    mean = np.where(mask_row, np.nan_to_num(np.asarray(values_row, dtype=float), nan=0.0), 0.0)
    if link.kind == DEGENERATE:
        labels = np.where(mask_row, INFINITE, 0).astype(np.int8)
        return Message(0.0, mean, PseudoPrecision(labels, np.zeros((0, 0))))
    v_res = link.residual_variance() if residual_variance is None else residual_variance
    obs = np.flatnonzero(mask_row)
    block = spd_inverse(v_res[np.ix_(obs, obs)])
    labels = np.where(mask_row, FINITE, 0).astype(np.int8)
    return Message(0.0, mean, PseudoPrecision(labels, block))


def _combine_deflated(qa: Message, qb: Message) -> Message:
    """Pointwise product of two deflated (Infinite-free) messages."""
    pa, pb = qa.precision, qb.precision
    q = pa.q
    supp = pa.support | pb.support
    fin = np.flatnonzero(supp)
    pos = np.full(q, -1, dtype=np.int64)
    pos[fin] = np.arange(fin.size)
    block = np.zeros((fin.size, fin.size))
    ia = pos[pa.finite_idx]
    ib = pos[pb.finite_idx]
    block[np.ix_(ia, ia)] += pa.finite_block
    block[np.ix_(ib, ib)] += pb.finite_block
    rhs = (pa.matvec(qa.mean) + pb.matvec(qb.mean))[fin]
    mean = np.zeros(q)
    mean[fin] = spd_solve(block, rhs)
    prec = PseudoPrecision(np.where(supp, FINITE, 0).astype(np.int8), block)
    delta = pa.effective_dim + pb.effective_dim - fin.size
    log_r = (
        qa.log_remainder
        + qb.log_remainder
        + 0.5 * pseudo_det(pa)
        + 0.5 * pseudo_det(pb)
        - 0.5 * pseudo_det(prec)
        - 0.5 * delta * LOG_2PI
        - 0.5 * (pa.quad(qa.mean) + pb.quad(qb.mean) - prec.quad(mean))
    )
    return Message(log_r, mean, prec)


def combine_children(
    msg_a: Message, msg_b: Message, t_a: float, t_b: float, sigma: np.ndarray
) -> Message:
    """Deflate both child messages across their branches and merge them.

    The parent precision is the sum of the deflated child precisions on
    the OR-support; the parent mean solves the precision-weighted average
    equation; the remainder accumulates the marginal mass of the merge.
    """
    from .gaussian import branch_deflate

    return _combine_deflated(
        branch_deflate(msg_a, t_a, sigma), branch_deflate(msg_b, t_b, sigma)
    )


def root_full_conditional(
    msg_root: Message, model: DiffusionModel
) -> tuple[np.ndarray, np.ndarray]:
    """Precision and mean of the root trait value given all observed data.

    P_full = P_root + kappa Sigma^-1;  n_full solves
    P_full n = P_root m_root + kappa Sigma^-1 mu0.
    """
    if msg_root.precision.has_infinite():
        raise ContractViolation("root message must be Infinite-free")
    kappa = model.root_sample_size
    sigma_inv = spd_inverse(model.sigma)
    p_full = symmetrize(msg_root.precision.dense() + kappa * sigma_inv)
    rhs = msg_root.precision.matvec(msg_root.mean) + kappa * (sigma_inv @ model.root_mean)
    return p_full, spd_solve(p_full, rhs)


def root_integrate(msg_root: Message, model: DiffusionModel) -> float:
    """Integrate the root message against the root prior; returns log p(Z_obs).

    With no data anywhere the result is exactly 0 (the density of an empty
    observation set is one).
    """
    p_root = msg_root.precision
    if p_root.has_infinite():
        raise ContractViolation("root message must be Infinite-free")
    log_r = msg_root.log_remainder
    if p_root.effective_dim == 0:
        return log_r
    kappa = model.root_sample_size
    sigma_inv = spd_inverse(model.sigma)
    p_full = symmetrize(p_root.dense() + kappa * sigma_inv)
    rhs = p_root.matvec(msg_root.mean) + kappa * (sigma_inv @ model.root_mean)
    n_full = spd_solve(p_full, rhs)
    log_det_prior = model.q * np.log(kappa) - spd_logdet(model.sigma)
    quad = (
        p_root.quad(msg_root.mean)
        + kappa * float(model.root_mean @ sigma_inv @ model.root_mean)
        - float(n_full @ p_full @ n_full)
    )
    return (
        log_r
        - 0.5 * p_root.effective_dim * LOG_2PI
        + 0.5 * pseudo_det(p_root)
        + 0.5 * log_det_prior
        - 0.5 * spd_logdet(p_full)
        - 0.5 * quad
    )


def _params_token(tree: Phylogeny, tm: TraitMatrix, model: DiffusionModel, link: TipLink) -> str:
    h = hashlib.sha256()
    h.update(tree.branch_length.tobytes())
    h.update(tm.mask.tobytes())
    h.update(model.sigma.tobytes())
    h.update(model.root_mean.tobytes())
    h.update(np.float64(model.root_sample_size).tobytes())
    h.update(link.kind.encode())
    if link.kind == RESIDUAL:
        h.update(link.residual_precision.tobytes())
    return h.hexdigest()


@dataclass
class PostOrderMessages:
    """Cached per-node messages from one post-order pass.

    ``params_token`` stamps the parameters used; the pre-order sampler
    refuses stale messages (recomputing them under different parameters
    is a correctness hazard, not just a performance one).
    """

    messages: list
    log_likelihood: float
    p_full: np.ndarray
    n_full: np.ndarray
    params_token: str


def _validate_inference_inputs(tree: Phylogeny, tm: TraitMatrix, model: DiffusionModel):
    if tm.n_taxa != tree.n_tips:
        raise DataError("trait matrix not aligned to tree (row count mismatch)")
    if tm.taxon_names != tree.tip_labels:
        raise DataError("trait matrix not aligned to tree (taxon order mismatch)")
    if tm.n_traits != model.q:
        raise DataError("trait count does not match model dimension")
    if np.any(tree.branch_length[: tree.root] <= 0):
        raise DataError("all branch lengths must be positive for inference")


def compute_messages(
    tree: Phylogeny, tm: TraitMatrix, model: DiffusionModel, link: TipLink
) -> PostOrderMessages:
    """Run the post-order pass and cache every node's message."""
    _validate_inference_inputs(tree, tm, model)
    v_res = link.residual_variance() if link.kind == RESIDUAL else None
    messages: list = [None] * tree.n_nodes
    for i in range(tree.n_tips):
        messages[i] = init_tip_message(tm.values[i], tm.mask[i], link, v_res)
    for k in range(tree.n_tips, tree.n_nodes):
        a, b = tree.children[k]
        messages[k] = combine_children(
            messages[a],
            messages[b],
            float(tree.branch_length[a]),
            float(tree.branch_length[b]),
            model.sigma,
        )
    root_msg = messages[tree.root]
    loglik = root_integrate(root_msg, model)
    if root_msg.precision.effective_dim == 0:
        p_full = model.root_sample_size * spd_inverse(model.sigma)
        n_full = model.root_mean.copy()
    else:
        p_full, n_full = root_full_conditional(root_msg, model)
    return PostOrderMessages(
        messages=messages,
        log_likelihood=loglik,
        p_full=p_full,
        n_full=n_full,
        params_token=_params_token(tree, tm, model, link),
    )


def log_likelihood(
    tree: Phylogeny, tm: TraitMatrix, model: DiffusionModel, link: TipLink
) -> float:
    """Observed-data log-likelihood log p(Z_obs | Sigma, tree, mu0, kappa).

    One visit per node; O(N q^3) total.  Equals the marginal density of the
    observed cells under the diffusion (+ optional residual) model.
    """
    return compute_messages(tree, tm, model, link).log_likelihood
