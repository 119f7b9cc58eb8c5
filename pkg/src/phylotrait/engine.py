"""Level-batched message passing for sampler hot loops.

Same mathematics as :mod:`phylotrait.likelihood` / :mod:`phylotrait.augmentation`
(the test suite enforces agreement to float precision), reorganized for
throughput: nodes are grouped into levels that can be processed together,
so one MCMC sweep costs a handful of batched q-by-q linear-algebra calls
per level instead of thousands of tiny Python-level operations.

Representation: per node, a dense q-by-q precision ``P`` that is exactly
zero off the support (the non-Zero coordinates) plus the support mask ``D``.
Determinants and inverses over the support are obtained by padding the
dead diagonal with ones: ``A = P + diag(1 - D)`` is invertible,
``det A = det~ P`` and ``A^-1 - diag(1 - D)`` is the padded pseudo-variance.
Infinite precisions never appear densely: tips enter through their padded
pseudo-variance (zeros for exactly observed coordinates), and branch
deflation turns everything finite before any determinant is taken.

Everything that depends only on (tree, mask, link kind) is precomputed in
:class:`LikelihoodWorkspace`; a post-order pass then only touches the
current (Sigma, Gamma).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DataError
from .gaussian import LOG_2PI, spd_inverse, symmetrize
from .likelihood import DEGENERATE, RESIDUAL, DiffusionModel, TipLink, _params_token
from .simulate import AugmentedState
from .traits import TraitMatrix
from .tree import Phylogeny


@dataclass
class TreeIndex:
    """Traversal structure of a phylogeny, grouped into batchable levels."""

    tree: Phylogeny
    post_levels: list  # (parent_ids, child_a, child_b, t_a, t_b) per height level
    pre_levels: list  # (node_ids, parent_ids, t) per depth level, root excluded
    n_tips: int
    n_nodes: int
    root: int

    @classmethod
    def build(cls, tree: Phylogeny) -> "TreeIndex":
        n, m = tree.n_tips, tree.n_nodes
        if np.any(tree.branch_length[: m - 1] <= 0):
            raise DataError("all branch lengths must be positive for inference")
        height = np.zeros(m, dtype=np.int64)
        for k in range(n, m):
            a, b = tree.children[k]
            height[k] = max(height[a], height[b]) + 1
        post_levels = []
        for h in range(1, int(height.max()) + 1):
            parents = np.flatnonzero(height == h)
            parents = parents[parents >= n]
            if parents.size == 0:
                continue
            ca = tree.children[parents, 0]
            cb = tree.children[parents, 1]
            post_levels.append(
                (
                    parents,
                    ca,
                    cb,
                    tree.branch_length[ca].astype(float),
                    tree.branch_length[cb].astype(float),
                )
            )
        depth = np.zeros(m, dtype=np.int64)
        for k in tree.preorder()[1:]:
            depth[k] = depth[tree.parent[k]] + 1
        pre_levels = []
        for d in range(1, int(depth.max()) + 1):
            nodes = np.flatnonzero(depth == d)
            pre_levels.append(
                (nodes, tree.parent[nodes], tree.branch_length[nodes].astype(float))
            )
        return cls(
            tree=tree,
            post_levels=post_levels,
            pre_levels=pre_levels,
            n_tips=n,
            n_nodes=m,
            root=tree.root,
        )


def _diag_embed(mask_rows: np.ndarray) -> np.ndarray:
    """(m, q) -> (m, q, q) diagonal matrices."""
    m, q = mask_rows.shape
    out = np.zeros((m, q, q))
    idx = np.arange(q)
    out[:, idx, idx] = mask_rows
    return out


@dataclass
class LikelihoodWorkspace:
    """Mask/link-dependent precomputation reused by every sweep."""

    index: TreeIndex
    values0: np.ndarray  # (N, q) data with 0 at missing cells
    mask: np.ndarray  # (N, q) bool
    link_kind: str
    support: np.ndarray  # (2N-1, q) bool, OR-propagated
    dims: np.ndarray  # (2N-1,) support sizes
    dead_diag: np.ndarray  # (2N-1, q, q) diag(1 - D)
    patterns: list  # (obs_idx array, tip_ids array) per distinct mask row
    post_t_dd: list  # per level: (2B, q, q) = t * outer(D_child, D_child)
    post_perm: list  # per level: concatenated child ids (a then b)
    deltas: list  # per level: dim_a + dim_b - dim_p

    @classmethod
    def build(cls, index: TreeIndex, tm: TraitMatrix, link: TipLink) -> "LikelihoodWorkspace":
        tree = index.tree
        n, m = index.n_tips, index.n_nodes
        q = tm.n_traits
        if tm.n_taxa != n or tm.taxon_names != tree.tip_labels:
            raise DataError("trait matrix not aligned to tree")
        mask = tm.mask.astype(bool)
        support = np.zeros((m, q), dtype=bool)
        support[:n] = mask
        for k in range(n, m):
            a, b = tree.children[k]
            support[k] = support[a] | support[b]
        dims = support.sum(axis=1).astype(np.int64)
        dead = _diag_embed(1.0 - support.astype(float))
        # group tips by missingness pattern
        patterns = []
        seen: dict[bytes, int] = {}
        for i in range(n):
            key = mask[i].tobytes()
            if key not in seen:
                seen[key] = len(patterns)
                patterns.append((np.flatnonzero(mask[i]), [i]))
            else:
                patterns[seen[key]][1].append(i)
        patterns = [(obs, np.array(ids, dtype=np.int64)) for obs, ids in patterns]

        post_t_dd, post_perm, deltas = [], [], []
        for parents, ca, cb, ta, tb in index.post_levels:
            kids = np.concatenate([ca, cb])
            t = np.concatenate([ta, tb])
            d_kids = support[kids].astype(float)
            t_dd = t[:, None, None] * (d_kids[:, :, None] * d_kids[:, None, :])
            post_t_dd.append(t_dd)
            post_perm.append(kids)
            deltas.append(dims[ca] + dims[cb] - dims[parents])
        return cls(
            index=index,
            values0=tm.filled(0.0),
            mask=mask,
            link_kind=link.kind,
            support=support,
            dims=dims,
            dead_diag=dead,
            patterns=patterns,
            post_t_dd=post_t_dd,
            post_perm=post_perm,
            deltas=deltas,
        )


@dataclass
class EngineMessages:
    """Arrays produced by one post-order pass (the engine's message cache)."""

    mean: np.ndarray  # (2N-1, q), zero off support
    prec: np.ndarray  # (2N-1, q, q), zero-padded precision
    pseudo_var: np.ndarray  # (2N-1, q, q), zero-padded pseudo-variance
    log_r: np.ndarray  # (2N-1,)
    log_likelihood: float
    p_full: np.ndarray
    n_full: np.ndarray
    sigma_inv: np.ndarray
    residual_variance: np.ndarray | None
    params_token: str


def post_order(
    ws: LikelihoodWorkspace, model: DiffusionModel, link: TipLink
) -> EngineMessages:
    """Batched post-order pass: per-node messages plus the log-likelihood."""
    idx = ws.index
    tree = idx.tree
    n, m = idx.n_tips, idx.n_nodes
    q = model.q
    sigma = model.sigma
    mean = np.zeros((m, q))
    mean[:n] = ws.values0
    prec = np.zeros((m, q, q))
    pseudo_var = np.zeros((m, q, q))
    log_r = np.zeros(m)

    v_res = None
    if link.kind == RESIDUAL:
        v_res = link.residual_variance()
        for obs, tips in ws.patterns:
            if obs.size == 0:
                continue
            sub = v_res[np.ix_(obs, obs)]
            pseudo_var[np.ix_(tips, obs, obs)] = sub
            prec[np.ix_(tips, obs, obs)] = spd_inverse(sub)
    # degenerate tips: pseudo-variance stays exactly zero on the support

    eye = np.eye(q)
    for level, (parents, ca, cb, _, _) in enumerate(idx.post_levels):
        kids = ws.post_perm[level]
        t_mat = ws.post_t_dd[level] * sigma + pseudo_var[kids]
        a_mat = t_mat + ws.dead_diag[kids]
        a_inv = np.linalg.inv(a_mat)
        a_inv = (a_inv + a_inv.transpose(0, 2, 1)) / 2
        _, logdet_a = np.linalg.slogdet(a_mat)
        q_defl = a_inv - ws.dead_diag[kids]
        u = np.einsum("kij,kj->ki", q_defl, mean[kids])
        quad = np.einsum("ki,ki->k", mean[kids], u)
        nb = parents.size
        p_par = q_defl[:nb] + q_defl[nb:]
        u_par = u[:nb] + u[nb:]
        a_par = p_par + ws.dead_diag[parents]
        var_par = np.linalg.inv(a_par)
        var_par = (var_par + var_par.transpose(0, 2, 1)) / 2
        _, logdet_p = np.linalg.slogdet(a_par)
        m_par = np.einsum("kij,kj->ki", var_par, u_par)
        quad_par = np.einsum("ki,ki->k", m_par, u_par)
        # log det~ of a deflated precision is -log det A of its T matrix
        log_r[parents] = (
            log_r[ca]
            + log_r[cb]
            - 0.5 * (logdet_a[:nb] + logdet_a[nb:])
            - 0.5 * logdet_p
            - 0.5 * ws.deltas[level] * LOG_2PI
            - 0.5 * (quad[:nb] + quad[nb:] - quad_par)
        )
        prec[parents] = p_par
        pseudo_var[parents] = var_par - ws.dead_diag[parents]
        mean[parents] = m_par

    # root integration against the prior MVN(mu0, Sigma/kappa)
    root = idx.root
    kappa = model.root_sample_size
    sigma_inv = spd_inverse(sigma)
    if ws.dims[root] == 0:
        loglik = float(log_r[root])
        p_full = kappa * sigma_inv
        n_full = model.root_mean.copy()
    else:
        p_root = prec[root]
        p_full = symmetrize(p_root + kappa * sigma_inv)
        rhs = p_root @ mean[root] + kappa * (sigma_inv @ model.root_mean)
        n_full = np.linalg.solve(p_full, rhs)
        _, logdet_root = np.linalg.slogdet(p_root + ws.dead_diag[root])
        _, logdet_full = np.linalg.slogdet(p_full)
        quad = (
            mean[root] @ p_root @ mean[root]
            + kappa * (model.root_mean @ sigma_inv @ model.root_mean)
            - n_full @ p_full @ n_full
        )
        loglik = float(
            log_r[root]
            - 0.5 * ws.dims[root] * LOG_2PI
            + 0.5 * logdet_root
            + 0.5 * (q * np.log(kappa) - np.linalg.slogdet(sigma)[1])
            - 0.5 * logdet_full
            - 0.5 * quad
        )
    tm_token = _params_token(
        tree,
        _TokenView(ws.mask, ws.values0),
        model,
        link,
    )
    return EngineMessages(
        mean=mean,
        prec=prec,
        pseudo_var=pseudo_var,
        log_r=log_r,
        log_likelihood=loglik,
        p_full=p_full,
        n_full=n_full,
        sigma_inv=sigma_inv,
        residual_variance=v_res,
        params_token=tm_token,
    )


class _TokenView:
    """Just enough of the TraitMatrix surface for parameter stamping."""

    def __init__(self, mask, values0):
        self.mask = mask
        self.values0 = values0


def _chol_lower(batch: np.ndarray) -> np.ndarray:
    return np.linalg.cholesky(batch)


def pre_order_sample(
    ws: LikelihoodWorkspace,
    msgs: EngineMessages,
    model: DiffusionModel,
    link: TipLink,
    rng: np.random.Generator,
    n_draws: int = 1,
) -> AugmentedState:
    """Joint draw(s) of (X, Z_mis) given the observed data.

    With ``n_draws > 1`` the draws share the post-order messages and are
    vectorized across replicates; arrays gain a leading draw axis which is
    squeezed away for ``n_draws == 1``.
    """
    expected = _params_token(ws.index.tree, _TokenView(ws.mask, ws.values0), model, link)
    if msgs.params_token != expected:
        raise ContractViolation(
            "post-order messages are stale: recompute them for the current parameters"
        )
    idx = ws.index
    n, m, q = idx.n_tips, idx.n_nodes, model.q
    sigma_inv = msgs.sigma_inv
    x = np.zeros((n_draws, m, q))
    z = np.zeros((n_draws, n, q))

    # root
    cov_root = spd_inverse(msgs.p_full)
    x[:, idx.root] = msgs.n_full + rng.standard_normal((n_draws, q)) @ np.linalg.cholesky(
        cov_root
    ).T

    deg = link.kind == DEGENERATE
    for nodes, parents, t in idx.pre_levels:
        internal = nodes >= n
        nodes_int = nodes[internal]
        if deg:
            tips = nodes[~internal]
        else:
            nodes_int = nodes
            tips = nodes[:0]
        if nodes_int.size:
            par = parents[internal] if deg else parents
            t_int = t[internal] if deg else t
            branch_prec = sigma_inv[None] / t_int[:, None, None]
            r = msgs.prec[nodes_int] + branch_prec
            cov = np.linalg.inv(r)
            cov = (cov + cov.transpose(0, 2, 1)) / 2
            rhs = (
                np.einsum("kij,kj->ki", msgs.prec[nodes_int], msgs.mean[nodes_int])[None]
                + np.einsum("kij,dkj->dki", branch_prec, x[:, par])
            )
            mean = np.einsum("kij,dkj->dki", cov, rhs)
            chol = _chol_lower(cov)
            noise = rng.standard_normal((n_draws, nodes_int.size, q))
            x[:, nodes_int] = mean + np.einsum("kij,dkj->dki", chol, noise)
        if deg and tips.size:
            _degenerate_tip_draws(ws, msgs, x, z, tips, parents[~internal], t[~internal], rng)

    if not deg:
        _residual_missing_draws(ws, link, x, z, rng)
    if n_draws == 1:
        return AugmentedState(node_values=x[0], filled_data=z[0])
    return AugmentedState(node_values=x, filled_data=z)


def _degenerate_tip_draws(ws, msgs, x, z, tips, parents, t, rng):
    """Exact-copy observed coordinates; partitioned diffusion draw for missing."""
    n_draws = x.shape[0]
    sigma_inv = msgs.sigma_inv
    tip_pos = {int(k): j for j, k in enumerate(tips)}
    for obs, ids in ws.patterns:
        sel = np.array([tip_pos[int(i)] for i in ids if int(i) in tip_pos], dtype=np.int64)
        if sel.size == 0:
            continue
        sub_tips = tips[sel]
        sub_par = parents[sel]
        sub_t = t[sel]
        q = ws.values0.shape[1]
        mis = np.setdiff1d(np.arange(q), obs)
        if obs.size:
            x[:, sub_tips[:, None], obs[None, :]] = ws.values0[sub_tips][None, :, obs]
        if mis.size == 0:
            continue
        d_mm = sigma_inv[np.ix_(mis, mis)]
        cov_mm = spd_inverse(d_mm)
        chol_mm = np.linalg.cholesky(cov_mm)
        mean = x[:, sub_par][:, :, mis]
        if obs.size:
            w = cov_mm @ sigma_inv[np.ix_(mis, obs)]
            diff = x[:, sub_par][:, :, obs] - ws.values0[sub_tips][None, :, obs]
            mean = mean + np.einsum("ij,dkj->dki", w, diff)
        noise = rng.standard_normal((n_draws, sub_tips.size, mis.size))
        scale = np.sqrt(sub_t)[None, :, None]
        x[:, sub_tips[:, None], mis[None, :]] = mean + scale * (noise @ chol_mm.T)
    z[:, tips] = x[:, tips]


def _residual_missing_draws(ws, link, x, z, rng):
    """Z_mis | X, Gamma around the sampled tip values, per missingness pattern."""
    n_draws = x.shape[0]
    gamma = link.residual_precision
    q = gamma.shape[0]
    for obs, ids in ws.patterns:
        mis = np.setdiff1d(np.arange(q), obs)
        if obs.size:
            z[:, ids[:, None], obs[None, :]] = ws.values0[ids][None, :, obs]
        if mis.size == 0:
            continue
        g_mm = gamma[np.ix_(mis, mis)]
        cov_mm = spd_inverse(g_mm)
        chol_mm = np.linalg.cholesky(cov_mm)
        mean = x[:, ids][:, :, mis]
        if obs.size:
            w = cov_mm @ gamma[np.ix_(mis, obs)]
            diff = x[:, ids][:, :, obs] - ws.values0[ids][None, :, obs]
            mean = mean + np.einsum("ij,dkj->dki", w, diff)
        noise = rng.standard_normal((n_draws, ids.size, mis.size))
        z[:, ids[:, None], mis[None, :]] = mean + noise @ chol_mm.T


@dataclass
class GramWorkspace:
    """Scalar tree precisions for A^T (Psi + J/kappa)^-1 A, fixed per (tree, kappa).

    The recursion mirrors the likelihood pass with q = 1 and Sigma = 1:
    tips deflate to scalar precision 1/t, internal combines add precisions,
    and the root prior acts as one extra pseudo-branch of length 1/kappa.
    """

    index: TreeIndex
    kappa: float
    q_child: list  # per level: (2B,) deflated child precisions (a then b)
    w_parent: list  # per level: (B,) combined precision q_a + q_b
    q_root: float

    @classmethod
    def build(cls, index: TreeIndex, kappa: float) -> "GramWorkspace":
        if kappa <= 0:
            raise DataError("kappa must be positive")
        tree = index.tree
        m = index.n_nodes
        pre_deflation = np.zeros(m)  # combined precision at each node
        pre_deflation[: index.n_tips] = np.inf
        q_child, w_parent = [], []
        for parents, ca, cb, ta, tb in index.post_levels:
            qa = 1.0 / (1.0 / pre_deflation[ca] + ta)
            qb = 1.0 / (1.0 / pre_deflation[cb] + tb)
            pre_deflation[parents] = qa + qb
            q_child.append(np.concatenate([qa, qb]))
            w_parent.append(qa + qb)
        q_root = 1.0 / (1.0 / pre_deflation[index.root] + 1.0 / kappa)
        return cls(index=index, kappa=kappa, q_child=q_child, w_parent=w_parent, q_root=q_root)


def tree_gram(ws: GramWorkspace, a_matrix: np.ndarray) -> np.ndarray:
    """A^T (Psi + J/kappa)^-1 A in O(N q^2) via the scalar recursion."""
    a_matrix = np.asarray(a_matrix, dtype=float)
    if a_matrix.ndim == 1:
        a_matrix = a_matrix[:, None]
    idx = ws.index
    if a_matrix.shape[0] != idx.n_tips:
        raise DataError("a_matrix rows must align with tips")
    q = a_matrix.shape[1]
    mean = np.zeros((idx.n_nodes, q))
    mean[: idx.n_tips] = a_matrix
    gram = np.zeros((q, q))
    for level, (parents, ca, cb, _, _) in enumerate(idx.post_levels):
        qc = ws.q_child[level]
        kids = np.concatenate([ca, cb])
        nb = parents.size
        weighted = qc[:, None] * mean[kids]
        m_par = (weighted[:nb] + weighted[nb:]) / ws.w_parent[level][:, None]
        mean[parents] = m_par
        gram += np.einsum("k,ki,kj->ij", qc, mean[kids], mean[kids])
        gram -= np.einsum("k,ki,kj->ij", ws.w_parent[level], m_par, m_par)
    m_root = mean[idx.root]
    gram += ws.q_root * np.outer(m_root, m_root)
    return symmetrize(gram)
