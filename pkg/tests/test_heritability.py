import numpy as np
import pytest

from phylotrait.errors import DataError
from phylotrait.heritability import (
    expected_empirical_covariance,
    heritability_matrix,
    tree_moments,
)
from phylotrait.likelihood import DiffusionModel, TipLink
from phylotrait.simulate import SimulationSpec, random_tree, simulate_traits
from phylotrait.tree import build_psi, parse_newick

FIG1 = "((A:1,B:1):2,C:3);"


class TestTreeMoments:
    def test_cherry_diagonal(self):
        m = tree_moments(parse_newick("(A:1,B:2);"))
        assert m.trace_psi == pytest.approx(3.0)
        assert m.total_sum == pytest.approx(3.0)

    def test_fig1_values(self):
        m = tree_moments(parse_newick(FIG1))
        assert m.trace_psi == pytest.approx(9.0)
        assert m.total_sum == pytest.approx(13.0)

    def test_matches_naive_psi_sums(self):
        rng = np.random.default_rng(0)
        for _ in range(60):
            n = int(rng.integers(2, 200))
            tree = random_tree(n, rng)
            m = tree_moments(tree)
            psi = build_psi(tree, 1.0).psi
            assert abs(m.trace_psi - np.trace(psi)) < 1e-10 * (1 + np.trace(psi))
            assert abs(m.total_sum - psi.sum()) < 1e-10 * (1 + abs(psi.sum()))


class TestExpectedCovariance:
    def test_fig1_hand_value(self):
        m = tree_moments(parse_newick(FIG1))
        assert m.c_diffusion == pytest.approx(14.0 / 9.0)
        v_z = expected_empirical_covariance(m, np.array([[1.0]]), np.array([[1.0]]))
        assert v_z[0, 0] == pytest.approx(20.0 / 9.0)

    def test_zero_components(self):
        m = tree_moments(parse_newick(FIG1))
        np.testing.assert_array_equal(
            expected_empirical_covariance(m, np.zeros((2, 2)), 0.0), np.zeros((2, 2))
        )

    def test_monte_carlo_mean_matches(self):
        rng = np.random.default_rng(1)
        tree = random_tree(12, rng)
        m = tree_moments(tree)
        sigma = np.array([[1.0, 0.3], [0.3, 0.7]])
        gamma = np.array([[2.0, -0.4], [-0.4, 1.5]])
        v_res = np.linalg.inv(gamma)
        model = DiffusionModel(sigma, np.array([0.5, -0.5]), 2.0)
        link = TipLink("residual", gamma)
        want = expected_empirical_covariance(m, sigma, v_res)
        reps = 10_000
        acc = np.zeros((2, 2))
        for r in range(reps):
            tm, _, _ = simulate_traits(
                SimulationSpec(model=model, link=link, tree=tree, seed=r)
            )
            z = tm.values
            zbar = z.mean(axis=0)
            acc += (z - zbar).T @ (z - zbar) / tree.n_tips
        got = acc / reps
        # 4 MC standard errors, entrywise (rough scale from the diagonal)
        se = 4 * np.sqrt(np.outer(np.diag(want), np.diag(want))) / np.sqrt(reps)
        assert np.all(np.abs(got - want) < 4 * se)


class TestHeritabilityMatrix:
    def test_hand_derived_07(self):
        m = tree_moments(parse_newick(FIG1))
        h = heritability_matrix(m, np.array([[1.0]]), np.array([[1.0]]))
        assert h[0, 0] == pytest.approx(0.7, abs=1e-12)

    def test_no_residual_fully_heritable(self):
        m = tree_moments(parse_newick(FIG1))
        h = heritability_matrix(m, np.array([[2.0, 0.5], [0.5, 1.0]]), 0.0)
        np.testing.assert_allclose(np.diag(h), [1.0, 1.0], atol=1e-12)

    def test_zero_sigma_gives_zero(self):
        m = tree_moments(parse_newick(FIG1))
        h = heritability_matrix(m, np.zeros((2, 2)), np.eye(2))
        np.testing.assert_array_equal(h, np.zeros((2, 2)))

    def test_diagonal_in_unit_interval(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(2, 30))
            tree = random_tree(n, rng)
            m = tree_moments(tree)
            q = int(rng.integers(1, 4))
            a = rng.standard_normal((q, q))
            sigma = a @ a.T + 0.1 * np.eye(q)
            b = rng.standard_normal((q, q))
            v_res = b @ b.T + 0.1 * np.eye(q)
            h = heritability_matrix(m, sigma, v_res)
            assert np.all(np.diag(h) >= 0) and np.all(np.diag(h) <= 1)
            assert np.all(np.abs(h) <= 1 + 1e-12)
            np.testing.assert_allclose(h, h.T, atol=1e-12)

    def test_zero_denominator_rejected(self):
        m = tree_moments(parse_newick(FIG1))
        with pytest.raises(DataError):
            heritability_matrix(m, np.zeros((1, 1)), np.zeros((1, 1)))
