"""Conjugate Wishart updates and the Gibbs sweep schedulers.

Wishart convention used everywhere: Wishart(rate R, df d) has density
proportional to |W|^((d-q-1)/2) exp(-0.5 tr(R W)), so E[W] = d R^-1.
Sampling uses the Bartlett construction with a triangular solve against
the Cholesky factor of the rate matrix (no explicit inversion).

Two samplers target the same posterior:

* :func:`mcmc_step` -- the analytic-integration sampler: one post-order
  likelihood pass, one exact joint pre-order draw of (X, Z_mis), then
  Sigma and (residual link) Gamma from their conditionally independent
  full conditionals, all from the same augmentation draw.
* :func:`baseline_tipwise_step` -- the comparison method: every tip with
  latent or missing values is updated one at a time from its full
  conditional given all other tips, via dense conditioning on the
  N-by-N tree covariance.  O(N^2) setup; exists for benchmarking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .augmentation import draw_mvn_precision
from .engine import (
    GramWorkspace,
    LikelihoodWorkspace,
    TreeIndex,
    post_order,
    pre_order_sample,
    tree_gram,
)
from .errors import ContractViolation, DataError, NumericalError
from .gaussian import is_spd, spd_inverse, symmetrize
from .likelihood import DEGENERATE, RESIDUAL, DiffusionModel, TipLink
from .simulate import AugmentedState
from .traits import TraitMatrix
from .tree import Phylogeny, build_psi


@dataclass(frozen=True)
class WishartPrior:
    """Rate matrix and degrees of freedom of a Wishart prior."""

    rate: np.ndarray
    df: float

    def __post_init__(self):
        rate = symmetrize(np.asarray(self.rate, dtype=float))
        object.__setattr__(self, "rate", rate)
        q = rate.shape[0]
        if not is_spd(rate):
            raise NumericalError("Wishart rate must be SPD")
        if self.df <= q - 1:
            raise DataError(f"Wishart df must exceed q - 1 = {q - 1}")

    @property
    def q(self) -> int:
        return self.rate.shape[0]


def sample_wishart(rate: np.ndarray, df: float, rng: np.random.Generator) -> np.ndarray:
    """Draw W ~ Wishart(rate, df) via Bartlett on the rate's Cholesky factor.

    With R = L L^T, the draw is (L^-T A)(L^-T A)^T for Bartlett factor A,
    which has scale R^-1 as required by the rate parameterization.
    """
    q = rate.shape[0]
    if df <= q - 1:
        raise DataError("Wishart df must exceed q - 1")
    chol_rate = np.linalg.cholesky(rate)
    a = np.zeros((q, q))
    for i in range(q):
        a[i, i] = np.sqrt(rng.chisquare(df - i))
    if q > 1:
        tril = np.tril_indices(q, k=-1)
        a[tril] = rng.standard_normal(len(tril[0]))
    factor = solve_triangular(chol_rate, a, lower=True, trans="T")
    return symmetrize(factor @ factor.T)


def tree_weighted_gram(
    tree: Phylogeny,
    kappa: float,
    a_matrix: np.ndarray,
    workspace: GramWorkspace | None = None,
) -> np.ndarray:
    """A^T (Psi + J/kappa)^-1 A in O(N q^2) without forming Psi."""
    if workspace is None:
        workspace = GramWorkspace.build(TreeIndex.build(tree), kappa)
    elif workspace.kappa != kappa:
        raise ContractViolation("gram workspace was built for a different kappa")
    return tree_gram(workspace, a_matrix)


def gibbs_sigma(
    prior: WishartPrior,
    aug: AugmentedState,
    tree: Phylogeny,
    model: DiffusionModel,
    rng: np.random.Generator,
    workspace: GramWorkspace | None = None,
) -> np.ndarray:
    """Draw a new diffusion covariance from its Wishart full conditional.

    Sigma^-1 | X ~ Wishart(rate0 + (X - 1 mu0^T)^T PsiTilde^-1 (X - 1 mu0^T),
    df0 + N); returns the inverse draw.
    """
    x_tips = aug.node_values[: tree.n_tips]
    centered = x_tips - model.root_mean[None, :]
    increment = tree_weighted_gram(tree, model.root_sample_size, centered, workspace)
    rate = prior.rate + increment
    w = sample_wishart(rate, prior.df + tree.n_tips, rng)
    return spd_inverse(w)


def gibbs_gamma(
    prior: WishartPrior,
    aug: AugmentedState,
    tm: TraitMatrix,
    rng: np.random.Generator,
    link_kind: str = RESIDUAL,
) -> np.ndarray:
    """Draw a new residual precision: Wishart(rate0 + (Z-X)^T (Z-X), df0 + N)."""
    if link_kind != RESIDUAL:
        raise ContractViolation("gibbs_gamma only applies under the residual link")
    resid = aug.filled_data - aug.node_values[: tm.n_taxa]
    rate = prior.rate + resid.T @ resid
    return sample_wishart(rate, prior.df + tm.n_taxa, rng)


@dataclass
class SamplerSetup:
    """Everything fixed across sweeps: data, priors, root prior, workspaces."""

    tree: Phylogeny
    tm: TraitMatrix
    link_kind: str
    root_mean: np.ndarray
    root_sample_size: float
    sigma_prior: WishartPrior
    gamma_prior: WishartPrior | None
    index: TreeIndex
    gram_ws: GramWorkspace
    like_ws_cache: dict
    random_scan: bool = False

    @property
    def q(self) -> int:
        return self.tm.n_traits


def make_sampler_setup(
    tree: Phylogeny,
    tm: TraitMatrix,
    link_kind: str,
    sigma_prior: WishartPrior | None = None,
    gamma_prior: WishartPrior | None = None,
    root_mean: np.ndarray | float = 0.0,
    root_sample_size: float = 1.0,
    random_scan: bool = False,
) -> SamplerSetup:
    """Validate inputs and precompute the traversal/gram workspaces."""
    q = tm.n_traits
    if link_kind not in (DEGENERATE, RESIDUAL):
        raise DataError(f"unknown link kind {link_kind!r}")
    if sigma_prior is None:
        sigma_prior = WishartPrior(np.eye(q), q + 1)
    if link_kind == RESIDUAL and gamma_prior is None:
        gamma_prior = WishartPrior(np.eye(q), q + 1)
    if sigma_prior.q != q or (gamma_prior is not None and gamma_prior.q != q):
        raise DataError("prior dimension does not match trait count")
    mean = np.atleast_1d(np.asarray(root_mean, dtype=float))
    if mean.size == 1:
        mean = np.full(q, mean[0])
    index = TreeIndex.build(tree)
    return SamplerSetup(
        tree=tree,
        tm=tm,
        link_kind=link_kind,
        root_mean=mean,
        root_sample_size=float(root_sample_size),
        sigma_prior=sigma_prior,
        gamma_prior=gamma_prior if link_kind == RESIDUAL else None,
        index=index,
        gram_ws=GramWorkspace.build(index, float(root_sample_size)),
        like_ws_cache={},
        random_scan=random_scan,
    )


def _like_ws(setup: SamplerSetup, link: TipLink) -> LikelihoodWorkspace:
    ws = setup.like_ws_cache.get(link.kind)
    if ws is None:
        ws = LikelihoodWorkspace.build(setup.index, setup.tm, link)
        setup.like_ws_cache[link.kind] = ws
    return ws


@dataclass
class McmcState:
    """Mutable chain state: current parameters, augmentation, counters, RNG."""

    sigma: np.ndarray
    gamma: np.ndarray | None
    augmented: AugmentedState
    iteration: int
    rng: np.random.Generator
    log_likelihood: float = np.nan


def _current_pieces(setup: SamplerSetup, sigma, gamma):
    model = DiffusionModel(sigma, setup.root_mean, setup.root_sample_size)
    if setup.link_kind == RESIDUAL:
        link = TipLink(RESIDUAL, gamma)
    else:
        link = TipLink(DEGENERATE)
    return model, link


def init_state(setup: SamplerSetup, seed_or_rng) -> McmcState:
    """Start a chain at Sigma = Gamma = I with one augmentation pass."""
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    q = setup.q
    sigma = np.eye(q)
    gamma = np.eye(q) if setup.link_kind == RESIDUAL else None
    model, link = _current_pieces(setup, sigma, gamma)
    ws = _like_ws(setup, link)
    msgs = post_order(ws, model, link)
    aug = pre_order_sample(ws, msgs, model, link, rng)
    return McmcState(
        sigma=sigma,
        gamma=gamma,
        augmented=aug,
        iteration=0,
        rng=rng,
        log_likelihood=msgs.log_likelihood,
    )


def mcmc_step(state: McmcState, setup: SamplerSetup) -> McmcState:
    """One joint sweep: messages -> exact (X, Z_mis) draw -> Sigma (and Gamma).

    Sigma and Gamma are drawn from the same augmentation draw; their full
    conditionals are conditionally independent, so a single post-order /
    pre-order pass serves both.  With ``random_scan`` the order of the two
    covariance updates is permuted per sweep using the chain RNG (they
    commute statistically; the option exists for scheduler parity).
    """
    model, link = _current_pieces(setup, state.sigma, state.gamma)
    ws = _like_ws(setup, link)
    msgs = post_order(ws, model, link)
    aug = pre_order_sample(ws, msgs, model, link, state.rng)

    def update_sigma():
        state.sigma = gibbs_sigma(
            setup.sigma_prior, aug, setup.tree, model, state.rng, setup.gram_ws
        )

    def update_gamma():
        if setup.link_kind == RESIDUAL:
            state.gamma = gibbs_gamma(setup.gamma_prior, aug, setup.tm, state.rng)

    blocks = [update_sigma, update_gamma]
    if setup.random_scan and len(blocks) > 1:
        order = state.rng.permutation(len(blocks))
        for i in order:
            blocks[i]()
    else:
        for b in blocks:
            b()
    state.augmented = aug
    state.iteration += 1
    state.log_likelihood = msgs.log_likelihood
    return state


@dataclass
class BaselineWorkspace:
    """Dense per-tip conditioning weights for the tip-wise sampler.

    From Omega = PsiTilde^-1: conditioning tip i on all other tips gives
    row variance 1/Omega_ii and mean mu0 - (Omega_i,-i / Omega_ii) (X_-i - M);
    both come from one O(N^3) inverse, computed once per tree.
    """

    omega: np.ndarray
    cond_var: np.ndarray  # (N,) = 1 / Omega_ii

    @classmethod
    def build(cls, tree: Phylogeny, kappa: float) -> "BaselineWorkspace":
        psi_tilde = build_psi(tree, kappa).psi_tilde
        omega = spd_inverse(psi_tilde)
        return cls(omega=omega, cond_var=1.0 / np.diag(omega))


def _tree_conditional_mean(bw: BaselineWorkspace, x_tips, i, root_mean):
    """E[X_i | X_-i] under the tree prior, via the precision row."""
    centered = x_tips - root_mean[None, :]
    row = bw.omega[i] @ centered - bw.omega[i, i] * centered[i]
    return root_mean - bw.cond_var[i] * row


def baseline_tipwise_step(
    state: McmcState, setup: SamplerSetup, workspace: BaselineWorkspace
) -> McmcState:
    """One sweep of the comparison sampler: per-tip Gibbs, then Sigma/Gamma.

    Missing and latent tip values are treated as individual parameters:
    each tip is resampled from its full conditional given every other tip
    (dense tree conditioning), then the covariance updates reuse the same
    conjugate Wishart draws as the analytic sampler.
    """
    rng = state.rng
    tree, tm = setup.tree, setup.tm
    n, q = tree.n_tips, setup.q
    model, link = _current_pieces(setup, state.sigma, state.gamma)
    sigma_inv = spd_inverse(state.sigma)
    x_tips = state.augmented.node_values[: n].copy()
    z = state.augmented.filled_data.copy()

    if setup.link_kind == DEGENERATE:
        for i in range(n):
            mis = np.flatnonzero(~tm.mask[i])
            if mis.size == 0:
                continue
            obs = np.flatnonzero(tm.mask[i])
            mu_i = _tree_conditional_mean(workspace, x_tips, i, setup.root_mean)
            d_mm = sigma_inv[np.ix_(mis, mis)]
            mean = mu_i[mis]
            if obs.size:
                d_mo = sigma_inv[np.ix_(mis, obs)]
                mean = mean + np.linalg.solve(d_mm, d_mo @ (mu_i[obs] - x_tips[i, obs]))
            x_tips[i, mis] = draw_mvn_precision(mean, d_mm / workspace.cond_var[i], rng)
            z[i, mis] = x_tips[i, mis]
    else:
        gamma = state.gamma
        for i in range(n):
            mu_i = _tree_conditional_mean(workspace, x_tips, i, setup.root_mean)
            prior_prec = sigma_inv / workspace.cond_var[i]
            r = prior_prec + gamma
            rhs = prior_prec @ mu_i + gamma @ z[i]
            x_tips[i] = draw_mvn_precision(np.linalg.solve(r, rhs), r, rng)
            mis = np.flatnonzero(~tm.mask[i])
            if mis.size:
                obs = np.flatnonzero(tm.mask[i])
                g_mm = gamma[np.ix_(mis, mis)]
                mean = x_tips[i, mis]
                if obs.size:
                    g_mo = gamma[np.ix_(mis, obs)]
                    mean = mean + np.linalg.solve(g_mm, g_mo @ (x_tips[i, obs] - z[i, obs]))
                z[i, mis] = draw_mvn_precision(mean, g_mm, rng)

    node_values = state.augmented.node_values.copy()
    node_values[:n] = x_tips
    aug = AugmentedState(node_values=node_values, filled_data=z)
    state.sigma = gibbs_sigma(setup.sigma_prior, aug, tree, model, rng, setup.gram_ws)
    if setup.link_kind == RESIDUAL:
        state.gamma = gibbs_gamma(setup.gamma_prior, aug, tm, rng)
    state.augmented = aug
    state.iteration += 1
    return state
