"""Phylogenetic heritability: expected empirical covariance and the H matrix.

The expected empirical trait covariance under the diffusion + residual
model is a linear combination of the two variance components,

    V_Z = ((N-1)/N) V_res + c_psi Sigma,
    c_psi = tr(Psi)/N - (1^T Psi 1)/N^2,

and the heritability matrix normalizes the diffusion share per trait pair.
Both tree functionals come from an O(N) post-order recursion over tip
counts and subtree sums -- Psi itself is never constructed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .tree import Phylogeny


@dataclass(frozen=True)
class TreeMoments:
    """tr(Psi) and 1^T Psi 1 plus the per-node accumulators that build them."""

    n_tips: int
    tip_count: np.ndarray  # n_k: tips below node k
    subtree_sum: np.ndarray  # s_k: sum of all entries of the subtree covariance
    subtree_diag: np.ndarray  # d_k: trace of the subtree covariance

    @property
    def trace_psi(self) -> float:
        return float(self.subtree_diag[-1])

    @property
    def total_sum(self) -> float:
        return float(self.subtree_sum[-1])

    @property
    def c_diffusion(self) -> float:
        """c_psi = tr(Psi)/N - (1^T Psi 1)/N^2."""
        n = self.n_tips
        return self.trace_psi / n - self.total_sum / n**2

    @property
    def c_residual(self) -> float:
        return (self.n_tips - 1) / self.n_tips


def tree_moments(tree: Phylogeny) -> TreeMoments:
    """O(N) recursion: tips start (n, s, d) = (1, 0, 0); each internal node adds

    n_p = n_a + n_b,  s_p = s_a + s_b + t_a n_a^2 + t_b n_b^2,
    d_p = d_a + d_b + t_a n_a + t_b n_b,

    so the root carries d = tr(Psi) and s = 1^T Psi 1.
    """
    m = tree.n_nodes
    n_below = np.zeros(m)
    s_below = np.zeros(m)
    d_below = np.zeros(m)
    n_below[: tree.n_tips] = 1.0
    for k in range(tree.n_tips, m):
        a, b = tree.children[k]
        ta, tb = tree.branch_length[a], tree.branch_length[b]
        n_below[k] = n_below[a] + n_below[b]
        s_below[k] = s_below[a] + s_below[b] + ta * n_below[a] ** 2 + tb * n_below[b] ** 2
        d_below[k] = d_below[a] + d_below[b] + ta * n_below[a] + tb * n_below[b]
    return TreeMoments(
        n_tips=tree.n_tips, tip_count=n_below, subtree_sum=s_below, subtree_diag=d_below
    )


def expected_empirical_covariance(
    moments: TreeMoments, sigma: np.ndarray, v_res: np.ndarray | float = 0.0
) -> np.ndarray:
    """V_Z = ((N-1)/N) V_res + c_psi Sigma (V_res = 0 under the degenerate link)."""
    sigma = np.asarray(sigma, dtype=float)
    v_res = np.asarray(v_res, dtype=float)
    if v_res.ndim == 0:
        v_res = float(v_res) * np.eye(sigma.shape[0])
    return moments.c_residual * v_res + moments.c_diffusion * sigma


def heritability_matrix(
    moments: TreeMoments, sigma: np.ndarray, v_res: np.ndarray | float = 0.0
) -> np.ndarray:
    """H with h_jk = c Sigma_jk / sqrt((c Sigma_jj + r V_jj)(c Sigma_kk + r V_kk)).

    Diagonal entries are the per-trait phylogenetic heritabilities in [0, 1];
    off-diagonals are pairwise co-heritabilities.
    """
    sigma = np.asarray(sigma, dtype=float)
    v_res = np.asarray(v_res, dtype=float)
    if v_res.ndim == 0:
        v_res = float(v_res) * np.eye(sigma.shape[0])
    c, r = moments.c_diffusion, moments.c_residual
    denom_diag = c * np.diag(sigma) + r * np.diag(v_res)
    if np.any(denom_diag <= 0):
        raise DataError("zero total variance for at least one trait")
    scale = np.sqrt(denom_diag)
    return (c * sigma) / np.outer(scale, scale)
