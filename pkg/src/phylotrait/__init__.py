"""Linear-time Bayesian inference of multivariate Brownian trait evolution
on phylogenies with missing measurements."""

__version__ = "0.1.0"

from .augmentation import sample_augmented, sample_internal, sample_root, sample_tip
from .diagnostics import ess, gelman_rubin, hpd_interval
from .gaussian import Message, PseudoPrecision, branch_deflate, degenerate_logdensity, pseudo_det, pseudo_inverse
from .gibbs import (
    McmcState,
    WishartPrior,
    baseline_tipwise_step,
    gibbs_gamma,
    gibbs_sigma,
    init_state,
    make_sampler_setup,
    mcmc_step,
    tree_weighted_gram,
)
from .heritability import expected_empirical_covariance, heritability_matrix, tree_moments
from .likelihood import (
    DiffusionModel,
    TipLink,
    combine_children,
    compute_messages,
    init_tip_message,
    log_likelihood,
    root_integrate,
)
from .oracle import oracle_dense_conditional, oracle_dense_gram, oracle_dense_loglik
from .simulate import AugmentedState, SimulationSpec, apply_mar_mask, random_tree, simulate_traits
from .traits import TraitMatrix, align_to_tree, read_trait_csv, transform
from .tree import DenseTreeCovariance, Phylogeny, build_psi, drop_tip, parse_newick, traversal

__all__ = [
    "AugmentedState",
    "DenseTreeCovariance",
    "DiffusionModel",
    "McmcState",
    "Message",
    "Phylogeny",
    "PseudoPrecision",
    "SimulationSpec",
    "TipLink",
    "TraitMatrix",
    "WishartPrior",
    "align_to_tree",
    "apply_mar_mask",
    "baseline_tipwise_step",
    "branch_deflate",
    "build_psi",
    "combine_children",
    "compute_messages",
    "degenerate_logdensity",
    "drop_tip",
    "ess",
    "expected_empirical_covariance",
    "gelman_rubin",
    "gibbs_gamma",
    "gibbs_sigma",
    "heritability_matrix",
    "hpd_interval",
    "init_state",
    "init_tip_message",
    "log_likelihood",
    "make_sampler_setup",
    "mcmc_step",
    "oracle_dense_conditional",
    "oracle_dense_gram",
    "oracle_dense_loglik",
    "parse_newick",
    "pseudo_det",
    "pseudo_inverse",
    "random_tree",
    "read_trait_csv",
    "root_integrate",
    "sample_augmented",
    "sample_internal",
    "sample_root",
    "sample_tip",
    "simulate_traits",
    "transform",
    "traversal",
    "tree_moments",
    "tree_weighted_gram",
]
