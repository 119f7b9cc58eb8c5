import numpy as np
import pytest

from phylotrait.diagnostics import ess, gelman_rubin, hpd_interval
from phylotrait.errors import DataError


class TestEss:
    def test_iid_normal(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(10_000)
        val = ess(x)
        assert 0.8 * x.size <= val <= 1.2 * x.size

    def test_ar1_known_value(self):
        rng = np.random.default_rng(1)
        n, rho = 100_000, 0.9
        x = np.empty(n)
        x[0] = rng.standard_normal()
        noise = rng.standard_normal(n) * np.sqrt(1 - rho**2)
        for t in range(1, n):
            x[t] = rho * x[t - 1] + noise[t]
        want = n * (1 - rho) / (1 + rho)
        assert ess(x) == pytest.approx(want, rel=0.2)

    def test_constant_series(self):
        assert ess(np.full(100, 3.7)) == 1.0

    def test_short_series_rejected(self):
        with pytest.raises(DataError):
            ess(np.arange(5))


class TestHpd:
    def test_uniform_interval(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(0, 1, 200_000)
        lo, hi = hpd_interval(x, 0.95)
        assert hi - lo == pytest.approx(0.95, abs=0.01)

    def test_normal_interval(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(200_000)
        lo, hi = hpd_interval(x, 0.95)
        assert lo == pytest.approx(-1.96, abs=0.05)
        assert hi == pytest.approx(1.96, abs=0.05)

    def test_skewed_tighter_than_quantiles(self):
        rng = np.random.default_rng(4)
        x = rng.exponential(size=100_000)
        lo, hi = hpd_interval(x, 0.9)
        q_lo, q_hi = np.quantile(x, [0.05, 0.95])
        assert (hi - lo) < (q_hi - q_lo)


class TestGelmanRubin:
    def test_same_distribution_near_one(self):
        rng = np.random.default_rng(5)
        chains = [rng.standard_normal(5000) for _ in range(4)]
        assert gelman_rubin(chains) < 1.01

    def test_shifted_chains_flagged(self):
        rng = np.random.default_rng(6)
        chains = [rng.standard_normal(5000), rng.standard_normal(5000) + 3.0]
        assert gelman_rubin(chains) > 1.5
