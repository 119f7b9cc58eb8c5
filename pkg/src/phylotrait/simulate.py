"""Synthetic data generation under the diffusion (+ residual) model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .likelihood import RESIDUAL, DiffusionModel, TipLink
from .traits import TraitMatrix, make_trait_matrix
from .tree import Phylogeny, _Clade, _finalize


@dataclass(frozen=True)
class AugmentedState:
    """Realized latent node values plus a completed data matrix.

    ``node_values`` is (2N-1, q) over all nodes; ``filled_data`` is (N, q)
    with missing cells imputed.  Under the degenerate link the tip rows of
    ``node_values`` equal ``filled_data`` exactly.
    """

    node_values: np.ndarray
    filled_data: np.ndarray


@dataclass(frozen=True)
class SimulationSpec:
    """What to simulate: a tree (given or random), a model, a link, a mask."""

    model: DiffusionModel
    link: TipLink
    tree: Phylogeny | None = None
    n_tips: int | None = None
    mar_rate: float | tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if (self.tree is None) == (self.n_tips is None):
            raise DataError("give exactly one of tree or n_tips")


def random_tree(n_tips: int, rng: np.random.Generator) -> Phylogeny:
    """Random coalescent-style topology with iid Exponential(1) branch lengths."""
    if n_tips < 2:
        raise DataError("need at least 2 tips")
    active = [_Clade(label=f"t{i + 1}") for i in range(n_tips)]
    while len(active) > 1:
        i, j = rng.choice(len(active), size=2, replace=False)
        a, b = active[int(i)], active[int(j)]
        a.length = float(rng.exponential(1.0))
        b.length = float(rng.exponential(1.0))
        parent = _Clade(children=[a, b])
        active = [c for k, c in enumerate(active) if k not in (int(i), int(j))]
        active.append(parent)
    return _finalize(active[0])


def simulate_traits(spec: SimulationSpec) -> tuple[TraitMatrix, AugmentedState, Phylogeny]:
    """Forward-simulate node values and tip data; reproducible under the seed.

    Returns the complete trait matrix (no missing cells; apply
    :func:`apply_mar_mask` afterwards), the ground-truth augmented state,
    and the tree used.
    """
    rng = np.random.default_rng(spec.seed)
    tree = spec.tree if spec.tree is not None else random_tree(spec.n_tips, rng)
    model, link = spec.model, spec.link
    q = model.q
    chol_sigma = np.linalg.cholesky(model.sigma)
    x = np.zeros((tree.n_nodes, q))
    x[tree.root] = model.root_mean + (
        chol_sigma @ rng.standard_normal(q)
    ) / np.sqrt(model.root_sample_size)
    for k in tree.preorder()[1:]:
        k = int(k)
        t = float(tree.branch_length[k])
        x[k] = x[tree.parent[k]] + np.sqrt(t) * (chol_sigma @ rng.standard_normal(q))
    z = x[: tree.n_tips].copy()
    if link.kind == RESIDUAL:
        chol_res = np.linalg.cholesky(link.residual_variance())
        z = z + rng.standard_normal((tree.n_tips, q)) @ chol_res.T
    tm = make_trait_matrix(
        z,
        np.ones_like(z, dtype=bool),
        tree.tip_labels,
        tuple(f"trait{j + 1}" for j in range(q)),
    )
    truth = AugmentedState(node_values=x, filled_data=z)
    if spec.mar_rate is not None:
        tm = apply_mar_mask(tm, spec.mar_rate, rng)
    return tm, truth, tree


def apply_mar_mask(
    tm: TraitMatrix,
    mar_rate: float | tuple[float, ...],
    rng: np.random.Generator | int,
) -> TraitMatrix:
    """Mask each cell independently with its trait's missing-at-random probability."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    rates = np.broadcast_to(np.asarray(mar_rate, dtype=float), (tm.n_traits,))
    if np.any(rates < 0) or np.any(rates >= 1):
        raise DataError("mar rates must lie in [0, 1)")
    keep = rng.random(tm.values.shape) >= rates[None, :]
    return make_trait_matrix(
        tm.values, tm.mask & keep, tm.taxon_names, tm.trait_names
    )
