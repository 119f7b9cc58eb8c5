import numpy as np
import pytest

from phylotrait.errors import DataError
from phylotrait.likelihood import DiffusionModel, TipLink
from phylotrait.oracle import (
    mvn_logpdf,
    oracle_dense_conditional,
    oracle_dense_loglik,
    oracle_matrix_normal_loglik,
)
from phylotrait.simulate import SimulationSpec, random_tree, simulate_traits
from phylotrait.traits import make_trait_matrix
from phylotrait.tree import build_psi, parse_newick

DEG = TipLink("degenerate")


class TestDenseLoglik:
    def test_two_tip_hand_value(self):
        tree = parse_newick("(A:1,B:1);")
        tm = make_trait_matrix([[0.0], [0.0]], [[True], [True]], ["A", "B"], ["x"])
        model = DiffusionModel(np.array([[1.0]]), np.array([0.0]), 1.0)
        got = oracle_dense_loglik(tree, tm, model, DEG)
        assert got == pytest.approx(-np.log(2 * np.pi) - 0.5 * np.log(3.0))

    def test_all_masked_is_zero(self):
        tree = parse_newick("(A:1,B:1);")
        tm = make_trait_matrix(
            np.full((2, 2), np.nan), np.zeros((2, 2), bool), ["A", "B"], ["x", "y"]
        )
        model = DiffusionModel(np.eye(2), np.zeros(2), 1.0)
        assert oracle_dense_loglik(tree, tm, model, DEG) == 0.0

    def test_kronecker_vs_matrix_normal_forms(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(2, 10))
            q = int(rng.integers(1, 4))
            tree = random_tree(n, rng)
            a = rng.standard_normal((q, q))
            model = DiffusionModel(
                a @ a.T + q * np.eye(q), rng.standard_normal(q), float(rng.uniform(0.5, 3))
            )
            tm, _, _ = simulate_traits(
                SimulationSpec(model=model, link=DEG, tree=tree, seed=int(rng.integers(1 << 30)))
            )
            kron = oracle_dense_loglik(tree, tm, model, DEG)
            mn = oracle_matrix_normal_loglik(tree, tm, model)
            assert kron == pytest.approx(mn, abs=1e-9 * (1 + abs(mn)))

    def test_trait_permutation_consistency(self):
        rng = np.random.default_rng(1)
        tree = random_tree(5, rng)
        q = 3
        a = rng.standard_normal((q, q))
        sigma = a @ a.T + q * np.eye(q)
        model = DiffusionModel(sigma, rng.standard_normal(q), 1.0)
        tm, _, _ = simulate_traits(SimulationSpec(model=model, link=DEG, tree=tree, seed=2))
        mask = rng.random(tm.values.shape) > 0.3
        tm = make_trait_matrix(tm.values, mask, tm.taxon_names, tm.trait_names)
        perm = np.array([2, 0, 1])
        model_p = DiffusionModel(
            sigma[np.ix_(perm, perm)], model.root_mean[perm], 1.0
        )
        tm_p = make_trait_matrix(
            tm.values[:, perm], tm.mask[:, perm], tm.taxon_names, tuple("abc")
        )
        assert oracle_dense_loglik(tree, tm, model, DEG) == pytest.approx(
            oracle_dense_loglik(tree, tm_p, model_p, DEG), abs=1e-10
        )

    def test_masked_column_is_inert(self):
        # appending an all-masked trait leaves the observed-data density unchanged
        rng = np.random.default_rng(7)
        tree = random_tree(6, rng)
        sigma = np.array([[1.0, 0.2], [0.2, 0.8]])
        model = DiffusionModel(sigma, np.array([0.1, -0.4]), 1.5)
        tm, _, _ = simulate_traits(SimulationSpec(model=model, link=DEG, tree=tree, seed=8))
        base = oracle_dense_loglik(tree, tm, model, DEG)
        sigma3 = np.eye(3)
        sigma3[:2, :2] = sigma
        model3 = DiffusionModel(sigma3, np.append(model.root_mean, 0.0), 1.5)
        vals3 = np.column_stack([tm.values, np.full(6, np.nan)])
        mask3 = np.column_stack([tm.mask, np.zeros(6, dtype=bool)])
        tm3 = make_trait_matrix(vals3, mask3, tm.taxon_names, ("a", "b", "c"))
        assert oracle_dense_loglik(tree, tm3, model3, DEG) == pytest.approx(base, abs=1e-12)

    def test_size_guard(self):
        rng = np.random.default_rng(3)
        tree = random_tree(600, rng)
        q = 8
        tm = make_trait_matrix(
            np.zeros((600, q)),
            np.ones((600, q), bool),
            tree.tip_labels,
            [f"x{j}" for j in range(q)],
        )
        model = DiffusionModel(np.eye(q), np.zeros(q), 1.0)
        with pytest.raises(DataError, match="size guard"):
            oracle_dense_loglik(tree, tm, model, DEG)


class TestDenseConditional:
    def test_conditioning_on_nothing_gives_prior(self):
        tree = parse_newick("(A:1,B:2);")
        tm = make_trait_matrix(
            np.full((2, 1), np.nan), np.zeros((2, 1), bool), ["A", "B"], ["x"]
        )
        model = DiffusionModel(np.array([[1.5]]), np.array([0.7]), 2.0)
        mean, cov = oracle_dense_conditional(tree, tm, model, DEG, [("data", 0, 0)])
        assert mean[0] == pytest.approx(0.7)
        assert cov[0, 0] == pytest.approx((1.0 + 1 / 2.0) * 1.5)

    def test_cherry_regression_identity(self):
        tree = parse_newick("(A:1,B:1);")
        tm = make_trait_matrix([[2.0], [np.nan]], [[True], [False]], ["A", "B"], ["x"])
        mu, kappa = 0.5, 2.0
        model = DiffusionModel(np.array([[1.0]]), np.array([mu]), kappa)
        mean, cov = oracle_dense_conditional(tree, tm, model, DEG, [("data", 1, 0)])
        pt = build_psi(tree, kappa).psi_tilde
        want = mu + pt[1, 0] / pt[0, 0] * (2.0 - mu)
        assert mean[0] == pytest.approx(want)
        assert cov[0, 0] == pytest.approx(pt[1, 1] - pt[0, 1] ** 2 / pt[0, 0])

    def test_deleting_unobserved_is_identity(self):
        # conditional of a target is unchanged when all-missing taxa are present
        tree = parse_newick("((A:1,B:1):1,C:2);")
        tm = make_trait_matrix(
            [[1.0], [np.nan], [np.nan]], [[True], [False], [False]], list("ABC"), ["x"]
        )
        model = DiffusionModel(np.array([[1.0]]), np.array([0.0]), 1.0)
        mean_b, _ = oracle_dense_conditional(tree, tm, model, DEG, [("data", 1, 0)])
        pt = build_psi(tree, 1.0).psi_tilde
        assert mean_b[0] == pytest.approx(pt[1, 0] / pt[0, 0] * 1.0)


class TestMvnLogPdf:
    def test_standard_normal(self):
        val = mvn_logpdf(np.zeros(1), np.zeros(1), np.eye(1))
        assert val == pytest.approx(-0.5 * np.log(2 * np.pi))

    def test_empty_is_zero(self):
        assert mvn_logpdf(np.zeros(0), np.zeros(0), np.zeros((0, 0))) == 0.0
