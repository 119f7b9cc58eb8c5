"""Dense brute-force reference implementations for verification.

Deliberately naive O((Nq)^3) computations of the observed-data likelihood,
Gaussian conditionals of latent/missing coordinates, and tree-weighted
Gram matrices.  The vec layout is trait-major: the joint vector stacks the
N values of trait 1, then trait 2, and so on, matching the Kronecker form
cov = Sigma (x) PsiTilde.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .likelihood import RESIDUAL, DiffusionModel, TipLink
from .traits import TraitMatrix
from .tree import Phylogeny, build_psi

SIZE_GUARD = 4096


def mvn_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """Log density of MVN(mean, cov) at x; the empty distribution has log density 0."""
    n = x.size
    if n == 0:
        return 0.0
    diff = x - mean
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise DataError("covariance is not positive definite")
    return float(-0.5 * (n * np.log(2 * np.pi) + logdet + diff @ np.linalg.solve(cov, diff)))


def _check_size(tree: Phylogeny, q: int):
    if tree.n_tips * q > SIZE_GUARD:
        raise DataError(f"size guard: N*q = {tree.n_tips * q} exceeds {SIZE_GUARD}")


def _tip_joint(tree: Phylogeny, model: DiffusionModel, link: TipLink):
    """Trait-major mean and covariance of vec(Z) over all N*q cells."""
    n, q = tree.n_tips, model.q
    cov_tree = build_psi(tree, model.root_sample_size).psi_tilde
    cov = np.kron(model.sigma, cov_tree)
    if link.kind == RESIDUAL:
        cov = cov + np.kron(link.residual_variance(), np.eye(n))
    mean = np.kron(model.root_mean, np.ones(n))
    return mean, cov


def oracle_dense_loglik(
    tree: Phylogeny, tm: TraitMatrix, model: DiffusionModel, link: TipLink
) -> float:
    """Observed-data log-likelihood by deleting masked rows/columns of the dense joint."""
    _check_size(tree, model.q)
    mean, cov = _tip_joint(tree, model, link)
    obs = np.flatnonzero(tm.mask.T.ravel())
    if obs.size == 0:
        return 0.0
    x = tm.values.T.ravel()[obs]
    return mvn_logpdf(x, mean[obs], cov[np.ix_(obs, obs)])


def oracle_matrix_normal_loglik(
    tree: Phylogeny, tm: TraitMatrix, model: DiffusionModel
) -> float:
    """Complete-data matrix-normal log density in the row/column-variance form.

    Only valid for the degenerate link with a fully observed trait matrix;
    used as an independent second route to the Kronecker/vec value.
    """
    if not np.all(tm.mask):
        raise DataError("matrix-normal form needs complete data")
    n, q = tm.n_taxa, tm.n_traits
    psi_tilde = build_psi(tree, model.root_sample_size).psi_tilde
    resid = tm.values - np.outer(np.ones(n), model.root_mean)
    sign_r, logdet_r = np.linalg.slogdet(psi_tilde)
    sign_c, logdet_c = np.linalg.slogdet(model.sigma)
    if sign_r <= 0 or sign_c <= 0:
        raise DataError("non-PD covariance")
    quad = np.trace(
        np.linalg.solve(model.sigma, resid.T @ np.linalg.solve(psi_tilde, resid))
    )
    return float(
        -0.5 * n * q * np.log(2 * np.pi)
        - 0.5 * q * logdet_r
        - 0.5 * n * logdet_c
        - 0.5 * quad
    )


def _root_paths(tree: Phylogeny) -> list[list[int]]:
    paths: list[list[int]] = [None] * tree.n_nodes  # type: ignore[assignment]
    paths[tree.root] = [tree.root]
    for k in tree.preorder()[1:]:
        paths[k] = paths[tree.parent[k]] + [int(k)]
    return paths


def _shared_path_matrix(tree: Phylogeny) -> np.ndarray:
    """S[k, l] = summed branch length of the shared root path of nodes k and l."""
    depth = tree.depths()
    paths = _root_paths(tree)
    m = tree.n_nodes
    s = np.zeros((m, m))
    for k in range(m):
        pk = paths[k]
        for l in range(k, m):
            pl = paths[l]
            mrca = tree.root
            for u, v in zip(pk, pl):
                if u != v:
                    break
                mrca = u
            s[k, l] = s[l, k] = depth[mrca]
    return s


def oracle_dense_conditional(
    tree: Phylogeny,
    tm: TraitMatrix,
    model: DiffusionModel,
    link: TipLink,
    targets: list[tuple[str, int, int]],
) -> tuple[np.ndarray, np.ndarray]:
    """Exact conditional mean/covariance of target coordinates given observations.

    Targets are ("node", k, j) for the latent value of trait j at node k, or
    ("data", i, j) for the data cell of taxon i, trait j.  The joint extends
    the tip model with every internal node via pairwise shared-path
    covariances.  Conditioning on nothing returns the prior moments.
    """
    _check_size(tree, model.q)
    n, q, m = tree.n_tips, model.q, tree.n_nodes
    s_nodes = _shared_path_matrix(tree) + 1.0 / model.root_sample_size

    if link.kind == RESIDUAL:
        n_ent = m + n
        s_ent = np.zeros((n_ent, n_ent))
        s_ent[:m, :m] = s_nodes
        s_ent[m:, :m] = s_nodes[:n, :]
        s_ent[:m, m:] = s_nodes[:, :n]
        s_ent[m:, m:] = s_nodes[:n, :n]
        cov = np.kron(model.sigma, s_ent)
        e_data = np.zeros((n_ent, n_ent))
        e_data[m + np.arange(n), m + np.arange(n)] = 1.0
        cov = cov + np.kron(link.residual_variance(), e_data)

        def data_entity(i):
            return m + i

    else:
        n_ent = m
        cov = np.kron(model.sigma, s_nodes)

        def data_entity(i):
            return i

    mean = np.kron(model.root_mean, np.ones(n_ent))

    def coord(kind, idx, j):
        if kind == "node":
            ent = idx
        elif kind == "data":
            ent = data_entity(idx)
        else:
            raise DataError(f"unknown coordinate kind {kind!r}")
        return j * n_ent + ent

    obs_coords = [coord("data", i, j) for i in range(n) for j in range(q) if tm.mask[i, j]]
    tgt_coords = [coord(kind, idx, j) for kind, idx, j in targets]
    tgt = np.array(tgt_coords, dtype=np.int64)
    if not obs_coords:
        return mean[tgt], cov[np.ix_(tgt, tgt)]
    obs = np.array(obs_coords, dtype=np.int64)
    x_obs = np.array([tm.values[i, j] for i in range(n) for j in range(q) if tm.mask[i, j]])
    c_oo = cov[np.ix_(obs, obs)]
    c_to = cov[np.ix_(tgt, obs)]
    w = np.linalg.solve(c_oo, c_to.T).T
    cond_mean = mean[tgt] + w @ (x_obs - mean[obs])
    cond_cov = cov[np.ix_(tgt, tgt)] - w @ c_to.T
    return cond_mean, (cond_cov + cond_cov.T) / 2.0


def dense_gram(psi_tilde: np.ndarray, a_matrix: np.ndarray) -> np.ndarray:
    """A^T PsiTilde^-1 A by direct solve."""
    return a_matrix.T @ np.linalg.solve(psi_tilde, a_matrix)


def oracle_dense_gram(tree: Phylogeny, kappa: float, a_matrix: np.ndarray) -> np.ndarray:
    """Dense mirror of the fast tree-weighted Gram computation."""
    a_matrix = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    if a_matrix.shape[0] != tree.n_tips:
        a_matrix = a_matrix.T
    if a_matrix.shape[0] != tree.n_tips:
        raise DataError("a_matrix rows must align with tips")
    _check_size(tree, a_matrix.shape[1])
    return dense_gram(build_psi(tree, kappa).psi_tilde, a_matrix)
