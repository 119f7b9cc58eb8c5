import numpy as np
import pytest

from phylotrait.errors import DataError
from phylotrait.likelihood import DiffusionModel, TipLink
from phylotrait.simulate import (
    SimulationSpec,
    apply_mar_mask,
    random_tree,
    simulate_traits,
)
from phylotrait.tree import build_psi, parse_newick
from phylotrait.traits import make_trait_matrix


class TestRandomTree:
    def test_structure(self):
        rng = np.random.default_rng(0)
        tree = random_tree(17, rng)
        assert tree.n_tips == 17
        assert tree.n_nodes == 33
        assert np.all(tree.branch_length[: tree.root] > 0)

    def test_seed_determinism(self):
        a = random_tree(9, np.random.default_rng(5)).to_newick()
        b = random_tree(9, np.random.default_rng(5)).to_newick()
        assert a == b


class TestSimulateTraits:
    def test_zero_branches_collapse_to_root(self):
        # zero branch lengths are allowed for simulation only
        tree = parse_newick("((A:0,B:0):0,C:0);")
        mu = np.array([3.0])
        model = DiffusionModel(np.array([[1.0]]), mu, 1e8)
        tm, truth, _ = simulate_traits(
            SimulationSpec(model=model, link=TipLink("degenerate"), tree=tree, seed=0)
        )
        np.testing.assert_allclose(tm.values, 3.0, atol=1e-3)

    def test_tip_covariance_matches_psi_tilde(self):
        rng = np.random.default_rng(1)
        tree = random_tree(6, rng)
        model = DiffusionModel(np.array([[1.0]]), np.array([0.0]), 2.0)
        reps = 10_000
        draws = np.empty((reps, 6))
        for r in range(reps):
            tm, _, _ = simulate_traits(
                SimulationSpec(model=model, link=TipLink("degenerate"), tree=tree, seed=r)
            )
            draws[r] = tm.values[:, 0]
        got = np.cov(draws.T)
        want = build_psi(tree, 2.0).psi_tilde
        se = 4 * np.sqrt(np.outer(np.diag(want), np.diag(want))) / np.sqrt(reps)
        assert np.all(np.abs(got - want) < 4 * se)

    def test_residual_adds_tip_variance(self):
        rng = np.random.default_rng(2)
        tree = random_tree(4, rng)
        gamma = np.array([[0.5]])
        model = DiffusionModel(np.array([[1.0]]), np.array([0.0]), 1.0)
        reps = 10_000
        draws = np.empty((reps, 4))
        for r in range(reps):
            tm, _, _ = simulate_traits(
                SimulationSpec(model=model, link=TipLink("residual", gamma), tree=tree, seed=r)
            )
            draws[r] = tm.values[:, 0]
        want = np.diag(build_psi(tree, 1.0).psi_tilde) + 2.0  # + Gamma^-1
        got = draws.var(axis=0, ddof=1)
        se = 4 * want * np.sqrt(2.0 / reps)
        assert np.all(np.abs(got - want) < 4 * se)

    def test_seed_determinism(self):
        model = DiffusionModel(np.eye(2), np.zeros(2), 1.0)
        spec = SimulationSpec(model=model, link=TipLink("degenerate"), n_tips=8, seed=3)
        a, _, ta = simulate_traits(spec)
        b, _, tb = simulate_traits(spec)
        np.testing.assert_array_equal(a.values, b.values)
        assert ta.to_newick() == tb.to_newick()


class TestMarMask:
    def make_tm(self, n=100, q=100):
        vals = np.arange(n * q, dtype=float).reshape(n, q)
        return make_trait_matrix(
            vals, np.ones((n, q), bool), [f"t{i}" for i in range(n)], [f"x{j}" for j in range(q)]
        )

    def test_rate_zero_identity(self):
        tm = self.make_tm(10, 3)
        out = apply_mar_mask(tm, 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(out.mask, tm.mask)

    def test_rate_one_rejected(self):
        with pytest.raises(DataError):
            apply_mar_mask(self.make_tm(4, 2), 1.0, np.random.default_rng(0))

    def test_binomial_concentration(self):
        tm = self.make_tm(100, 100)  # N*q = 10000
        out = apply_mar_mask(tm, 0.3, np.random.default_rng(1))
        frac = 1.0 - out.mask.mean()
        assert abs(frac - 0.3) < 0.02

    def test_per_trait_rates(self):
        tm = self.make_tm(2000, 2)
        out = apply_mar_mask(tm, (0.0, 0.5), np.random.default_rng(2))
        assert out.mask[:, 0].all()
        assert abs(out.mask[:, 1].mean() - 0.5) < 0.05
