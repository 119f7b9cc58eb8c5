import numpy as np
import pytest

from phylotrait.bench import efficiency, parameter_columns, render_table
from phylotrait.gibbs import make_sampler_setup
from phylotrait.likelihood import DiffusionModel, TipLink
from phylotrait.logio import (
    correlation_from_covariance,
    log_columns,
    read_log,
    summarize_samples,
    upper_triangle,
    write_log,
)
from phylotrait.runner import run_chain
from phylotrait.simulate import SimulationSpec, apply_mar_mask, random_tree, simulate_traits


class TestSchema:
    def test_degenerate_columns(self):
        cols = log_columns(3, "degenerate")
        assert cols[:2] == ["state", "log_likelihood"]
        assert cols.count("sigma_1_2") == 1
        assert "gamma_1_1" not in cols
        assert len(cols) == 2 + 6 + 3

    def test_residual_columns(self):
        cols = log_columns(3, "residual")
        assert len(cols) == 2 + 6 + 3 + 6 + 6 + 6

    def test_upper_triangle_ordering(self):
        m = np.array([[1.0, 2.0], [2.0, 3.0]])
        assert upper_triangle(m) == [1.0, 2.0, 3.0]
        assert upper_triangle(m, diagonal=False) == [2.0]

    def test_correlation(self):
        sigma = np.array([[4.0, 2.0], [2.0, 9.0]])
        corr = correlation_from_covariance(sigma)
        assert corr[0, 1] == pytest.approx(2.0 / 6.0)
        np.testing.assert_allclose(np.diag(corr), 1.0)


class TestRoundTrip:
    def test_float_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = [
            [float(v) for v in rng.standard_normal(3) * 10.0 ** float(rng.integers(-8, 8))]
            for _ in range(50)
        ]
        path = tmp_path / "log.tsv"
        write_log(path, {"seed": 1}, ["a", "b", "c"], rows)
        meta, cols, data = read_log(path)
        assert meta["seed"] == 1
        assert cols == ["a", "b", "c"]
        np.testing.assert_array_equal(data, np.array(rows))

    def test_summary_recomputation_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        tree = random_tree(10, rng)
        model = DiffusionModel(np.eye(2), np.zeros(2), 1.0)
        tm, _, _ = simulate_traits(
            SimulationSpec(model=model, link=TipLink("degenerate"), tree=tree, seed=2)
        )
        tm = apply_mar_mask(tm, 0.2, rng)
        setup = make_sampler_setup(tree, tm, "degenerate")
        result = run_chain(setup, 60, 3)
        in_memory = summarize_samples(result.columns, np.asarray(result.rows), 0.1)
        path = tmp_path / "log.tsv"
        write_log(path, {}, result.columns, result.rows)
        _, cols, data = read_log(path)
        from_file = summarize_samples(cols, data, 0.1)
        for a, b in zip(in_memory, from_file):
            assert a.name == b.name
            assert a.mean == pytest.approx(b.mean, abs=1e-12)
            assert a.hpd_low == b.hpd_low and a.hpd_high == b.hpd_high


class TestEfficiency:
    def test_parameter_columns_skip_bookkeeping(self):
        cols = ["state", "log_likelihood", "sigma_1_1", "corr_1_2"]
        assert parameter_columns(cols) == [2, 3]

    def test_single_row_table(self):
        rng = np.random.default_rng(2)
        tree = random_tree(8, rng)
        model = DiffusionModel(np.eye(2), np.zeros(2), 1.0)
        tm, _, _ = simulate_traits(
            SimulationSpec(model=model, link=TipLink("degenerate"), tree=tree, seed=4)
        )
        tm = apply_mar_mask(tm, 0.3, rng)
        setup = make_sampler_setup(tree, tm, "degenerate")
        with pytest.warns(UserWarning, match="wall-clock"):
            row = efficiency(run_chain(setup, 300, 5), 0.1)
        table = render_table([row])
        assert "analytic" in table and "speed-up" not in table

    def test_self_comparison_ratio_near_one(self):
        rng = np.random.default_rng(3)
        tree = random_tree(24, rng)
        model = DiffusionModel(np.eye(2), np.zeros(2), 1.0)
        tm, _, _ = simulate_traits(
            SimulationSpec(model=model, link=TipLink("degenerate"), tree=tree, seed=6)
        )
        tm = apply_mar_mask(tm, 0.3, rng)
        setup = make_sampler_setup(tree, tm, "degenerate")
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = efficiency(run_chain(setup, 2000, 7), 0.1)
            b = efficiency(run_chain(setup, 2000, 8), 0.1)
        ratio = a.samples_per_hour / b.samples_per_hour
        assert 0.5 <= ratio <= 2.0
