"""Pre-order joint sampling of latent node values and missing tip data.

Given the cached post-order messages for the current parameters, one
pre-order pass draws (X, Z_mis) exactly from their joint full conditional:
the root from MVN(n_full, P_full^-1), each internal node from the
precision-weighted combination of its message and the diffusion step from
its already-sampled parent, and tips from the link-specific partition
formulas.  All conditionals are parameterized by their precision and
sampled by solving a Cholesky factor against standard normal draws.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ContractViolation
from .gaussian import Message, spd_inverse, symmetrize
from .likelihood import (
    DEGENERATE,
    DiffusionModel,
    PostOrderMessages,
    TipLink,
    _params_token,
)
from .simulate import AugmentedState
from .traits import TraitMatrix
from .tree import Phylogeny


def draw_mvn_precision(mean: np.ndarray, precision: np.ndarray, rng) -> np.ndarray:
    """One MVN draw given (mean, precision): mean + L^-T z with L = chol(P)."""
    chol = np.linalg.cholesky(precision)
    z = rng.standard_normal(mean.size)
    return mean + solve_triangular(chol, z, lower=True, trans="T")


def sample_root(msg_root_or_full, model: DiffusionModel, rng) -> np.ndarray:
    """Draw the root trait value from its full conditional given all data.

    Accepts either the root message or a precomputed (P_full, n_full) pair.
    """
    if isinstance(msg_root_or_full, Message):
        from .likelihood import root_full_conditional

        if msg_root_or_full.precision.effective_dim == 0:
            p_full = model.root_sample_size * spd_inverse(model.sigma)
            n_full = model.root_mean
        else:
            p_full, n_full = root_full_conditional(msg_root_or_full, model)
    else:
        p_full, n_full = msg_root_or_full
    return draw_mvn_precision(n_full, p_full, rng)


def sample_internal(
    msg_k: Message, parent_value: np.ndarray, t_k: float, sigma: np.ndarray, rng,
    sigma_inv: np.ndarray | None = None,
) -> np.ndarray:
    """Draw node k given its subtree data (via its message) and its parent value.

    Conditional precision R = P_k + (t_k Sigma)^-1 and mean
    R^-1 (P_k m_k + (t_k Sigma)^-1 x_parent).
    """
    if t_k <= 0:
        raise ContractViolation("branch length must be positive")
    if sigma_inv is None:
        sigma_inv = spd_inverse(sigma)
    branch_prec = sigma_inv / t_k
    r = symmetrize(msg_k.precision.dense() + branch_prec)
    rhs = msg_k.precision.matvec(msg_k.mean) + branch_prec @ parent_value
    mean = np.linalg.solve(r, rhs)
    return draw_mvn_precision(mean, r, rng)


def _conditional_blocks(prec: np.ndarray, obs: np.ndarray, mis: np.ndarray):
    """Sub-blocks of a partitioned precision: (P_mm, P_mo)."""
    return prec[np.ix_(mis, mis)], prec[np.ix_(mis, obs)]


def sample_tip(
    values_row: np.ndarray,
    mask_row: np.ndarray,
    link: TipLink,
    parent_value: np.ndarray,
    t_i: float,
    sigma: np.ndarray,
    rng,
    sigma_inv: np.ndarray | None = None,
    tip_msg: Message | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw the latent tip value (and missing data cells) for one taxon.

    Degenerate link: observed coordinates are copied from the data; missing
    ones are drawn from the partitioned diffusion increment.  Residual
    link: the full latent value is drawn like an internal node using the
    tip message, and missing data cells are then drawn around it from the
    partitioned residual precision.  Returns (x_i, z_i_filled).
    """
    mask_row = np.asarray(mask_row, dtype=bool)
    q = mask_row.size
    obs = np.flatnonzero(mask_row)
    mis = np.flatnonzero(~mask_row)
    if sigma_inv is None:
        sigma_inv = spd_inverse(sigma)

    if link.kind == DEGENERATE:
        x = np.empty(q)
        x[obs] = values_row[obs]
        if mis.size:
            d_mm, d_mo = _conditional_blocks(sigma_inv, obs, mis)
            mean = parent_value[mis]
            if obs.size:
                mean = mean + np.linalg.solve(d_mm, d_mo @ (parent_value[obs] - x[obs]))
            x[mis] = draw_mvn_precision(mean, d_mm / t_i, rng)
        return x, x.copy()

    if tip_msg is None:
        from .likelihood import init_tip_message

        tip_msg = init_tip_message(values_row, mask_row, link)
    x = sample_internal(tip_msg, parent_value, t_i, sigma, rng, sigma_inv)
    z = np.empty(q)
    z[obs] = values_row[obs]
    if mis.size:
        gamma = link.residual_precision
        g_mm, g_mo = _conditional_blocks(gamma, obs, mis)
        mean = x[mis]
        if obs.size:
            mean = mean + np.linalg.solve(g_mm, g_mo @ (x[obs] - z[obs]))
        z[mis] = draw_mvn_precision(mean, g_mm, rng)
    return x, z


def sample_augmented(
    tree: Phylogeny,
    tm: TraitMatrix,
    model: DiffusionModel,
    link: TipLink,
    messages: PostOrderMessages,
    rng,
) -> AugmentedState:
    """One exact joint draw of (X, Z_mis) given the observed data.

    ``messages`` must come from a post-order pass under the same
    parameters; a stale cache is rejected via the parameter stamp.
    """
    if messages.params_token != _params_token(tree, tm, model, link):
        raise ContractViolation(
            "post-order messages are stale: recompute them for the current parameters"
        )
    q = model.q
    sigma_inv = spd_inverse(model.sigma)
    x = np.zeros((tree.n_nodes, q))
    z = np.zeros((tree.n_tips, q))
    x[tree.root] = draw_mvn_precision(messages.n_full, messages.p_full, rng)
    for k in tree.preorder()[1:]:
        k = int(k)
        pa = int(tree.parent[k])
        t_k = float(tree.branch_length[k])
        if tree.is_tip(k):
            x[k], z[k] = sample_tip(
                tm.values[k],
                tm.mask[k],
                link,
                x[pa],
                t_k,
                model.sigma,
                rng,
                sigma_inv,
                tip_msg=messages.messages[k],
            )
        else:
            x[k] = sample_internal(
                messages.messages[k], x[pa], t_k, model.sigma, rng, sigma_inv
            )
    return AugmentedState(node_values=x, filled_data=z)
