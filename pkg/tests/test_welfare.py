import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from housewelfare.model import DataError, NumericError, WeightedSample
from housewelfare.resample import stream
from housewelfare.welfare import (
    NU_GRID,
    inverse_utility,
    ratio_test,
    utility,
    wealth_ratio,
    welfare_estimate,
)

positive = st.floats(0.05, 1e3, allow_nan=False)
samples = st.lists(positive, min_size=2, max_size=30)


def _weighted(values, weights, round_id=0):
    w = np.asarray(weights, dtype=float)
    return WeightedSample(round_id, values, w * len(w) / w.sum())


class TestUtility:
    def test_values(self):
        assert utility(1.0, 0) == 1.0
        assert utility(1.0, 1) == 0.0
        assert utility(4.0, 2) == pytest.approx(-0.25)

    def test_domain(self):
        with pytest.raises(DataError):
            utility(0.0, 1)
        with pytest.raises(DataError):
            utility([1.0, -1.0], 0.5)

    @given(positive, st.sampled_from(NU_GRID))
    def test_inverse_round_trip(self, p, nu):
        assert inverse_utility(utility(p, nu), nu) == pytest.approx(p, rel=1e-10)


class TestWelfareEstimate:
    @pytest.mark.parametrize("nu", NU_GRID)
    def test_degenerate_sample(self, nu):
        est = welfare_estimate(WeightedSample.unweighted([3.7] * 6), nu)
        assert est.e_hat == pytest.approx(3.7, rel=1e-12)
        assert est.sigma2_W == pytest.approx(0.0, abs=1e-20)

    def test_linear_case_is_mean(self):
        est = welfare_estimate(WeightedSample.unweighted([1.0, 3.0]), 0)
        assert est.W_hat == 2.0 and est.e_hat == 2.0

    def test_log_case(self):
        est = welfare_estimate(WeightedSample.unweighted([1.0, math.e ** 2]), 1)
        assert est.W_hat == pytest.approx(1.0)
        assert est.e_hat == pytest.approx(math.e)

    def test_empty(self):
        with pytest.raises(DataError):
            welfare_estimate(WeightedSample.unweighted([]), 0)

    @given(samples)
    def test_decreasing_in_aversion(self, values):
        if np.ptp(values) <= 1e-6 * max(values):
            return
        smp = WeightedSample.unweighted(values)
        e = [welfare_estimate(smp, nu).e_hat for nu in NU_GRID]
        assert all(a > b for a, b in zip(e, e[1:]))

    @given(samples, st.lists(st.floats(0.1, 5.0), min_size=30, max_size=30), st.sampled_from(NU_GRID[1:]))
    def test_below_weighted_mean(self, values, weights, nu):
        smp = _weighted(values, weights[:len(values)])
        e = welfare_estimate(smp, nu).e_hat
        mean = smp.weighted_mean()
        if np.ptp(values) > 1e-6 * max(values):
            assert e < mean
        else:
            assert e == pytest.approx(mean, rel=1e-9)

    def test_high_aversion_welfare_negative(self, rng):
        est = welfare_estimate(WeightedSample.unweighted(rng.lognormal(0, 1, 50)), 2.5)
        assert est.W_hat < 0 < est.e_hat


class TestWealthRatio:
    @pytest.mark.parametrize("nu", NU_GRID)
    def test_self_ratio(self, nu, rng):
        smp = WeightedSample.unweighted(rng.lognormal(0, 0.5, 40))
        psi, sd = wealth_ratio(welfare_estimate(smp, nu), welfare_estimate(smp, nu))
        assert psi == pytest.approx(1.0, abs=1e-12)
        assert sd > 0

    @given(samples, st.floats(0.1, 10.0), st.sampled_from(NU_GRID))
    def test_scaled_sample(self, values, c, nu):
        base = WeightedSample.unweighted(values)
        scaled = WeightedSample.unweighted(np.asarray(values) * c)
        psi, _ = wealth_ratio(welfare_estimate(scaled, nu), welfare_estimate(base, nu))
        assert abs(psi - c) <= 1e-9 * max(1.0, c)

    @pytest.mark.parametrize("nu", NU_GRID)
    def test_delta_method_matches_numeric_gradient(self, nu, rng):
        r = welfare_estimate(WeightedSample.unweighted(rng.lognormal(0, 0.4, 60)), nu)
        b = welfare_estimate(WeightedSample.unweighted(rng.lognormal(0.1, 0.4, 80)), nu)
        psi, sd = wealth_ratio(r, b)

        def f(w_r, w_0):
            return inverse_utility(w_r, nu) / inverse_utility(w_0, nu)

        h_r, h_0 = 1e-6 * abs(r.W_hat), 1e-6 * abs(b.W_hat)
        g_r = (f(r.W_hat + h_r, b.W_hat) - f(r.W_hat - h_r, b.W_hat)) / (2 * h_r)
        g_0 = (f(r.W_hat, b.W_hat + h_0) - f(r.W_hat, b.W_hat - h_0)) / (2 * h_0)
        expected = math.sqrt(g_r ** 2 * r.sigma2_W + g_0 ** 2 * b.sigma2_W)
        assert psi == pytest.approx(f(r.W_hat, b.W_hat), rel=1e-12)
        assert sd == pytest.approx(expected, rel=1e-6)

    def test_estimator_mode_divides_by_sizes(self, rng):
        r = welfare_estimate(WeightedSample.unweighted(rng.lognormal(0, 0.4, 60)), 0)
        b = welfare_estimate(WeightedSample.unweighted(rng.lognormal(0, 0.4, 60)), 0)
        _, sd_pop = wealth_ratio(r, b, "population")
        _, sd_est = wealth_ratio(r, b, "estimator")
        assert sd_est == pytest.approx(sd_pop / math.sqrt(60))


class TestRatioTest:
    @pytest.mark.parametrize("nu", [0.0, 1.0, 2.0])
    def test_self_comparison_centred(self, nu, rng):
        smp = WeightedSample.unweighted(rng.lognormal(13, 0.4, 500))
        rep = ratio_test(smp, smp, nu, B=1000, seed=11)
        assert rep.psi_hat == pytest.approx(1.0, abs=1e-12)
        assert rep.theta == pytest.approx(0.0, abs=1e-9)
        assert 0.35 <= rep.p_value <= 0.65
        assert rep.critical_values[0.01] <= rep.critical_values[0.05] <= rep.critical_values[0.10]

    def test_upward_shift_never_rejects(self):
        rejections = 0
        for rep_id in range(100):
            g = np.random.default_rng(rep_id)
            base = WeightedSample.unweighted(g.lognormal(13, 0.4, 300))
            up = WeightedSample.unweighted(g.lognormal(13, 0.4, 300) * 1.5, 1)
            rejections += ratio_test(up, base, 0.0, B=200, seed=rep_id).rejects(0.05)
        assert rejections == 0

    def test_p_value_unchanged_by_common_variance_scale(self, rng):
        a = WeightedSample.unweighted(rng.lognormal(0, 0.5, 120))
        b = WeightedSample.unweighted(rng.lognormal(0.05, 0.5, 120))
        pop = ratio_test(a, b, 1.5, B=300, seed=5, variance_mode="population")
        est = ratio_test(a, b, 1.5, B=300, seed=5, variance_mode="estimator")
        assert pop.p_value == est.p_value
        assert est.theta == pytest.approx(pop.theta * math.sqrt(120))

    def test_scale_equivariance_of_self_comparison(self, rng):
        v = rng.lognormal(0, 0.5, 200)
        for c in (0.01, 1.0, 250.0):
            smp = WeightedSample.unweighted(v * c)
            rep = ratio_test(smp, smp, 2.0, B=200, seed=1)
            assert welfare_estimate(smp, 2.0).e_hat == pytest.approx(c * welfare_estimate(
                WeightedSample.unweighted(v), 2.0).e_hat)
            assert not rep.rejects(0.05)

    def test_deterministic_across_jobs(self, rng):
        a = WeightedSample.unweighted(rng.lognormal(0, 0.5, 150))
        b = WeightedSample.unweighted(rng.lognormal(0, 0.5, 170))
        one = ratio_test(a, b, 1.0, B=250, seed=9, jobs=1)
        two = ratio_test(a, b, 1.0, B=250, seed=9, jobs=3)
        assert one.to_json() == two.to_json()
        assert np.array_equal(one.draws, two.draws)

    def test_first_replication_by_brute_force(self, rng):
        vr, vb = rng.lognormal(0, 0.5, 40), rng.lognormal(0.1, 0.5, 30)
        wr, wb = rng.uniform(0.5, 2.0, 40), rng.uniform(0.5, 2.0, 30)
        r, b = _weighted(vr, wr, 1), _weighted(vb, wb, 0)
        nu = 1.5
        rep = ratio_test(r, b, nu, B=100, seed=21)

        g = stream(21, 0)
        ir, ib = g.integers(0, 40, 40), g.integers(0, 30, 30)

        def est(smp, idx):
            w = smp.weights[idx] * idx.size / smp.weights[idx].sum()
            return welfare_estimate(WeightedSample(0, smp.values[idx], w), nu)

        psi_b, sd_b = wealth_ratio(est(r, ir), est(b, ib))
        assert rep.draws[0] == pytest.approx((psi_b - rep.psi_hat) / sd_b, rel=1e-9)
        assert rep.p_value == np.mean(rep.draws <= rep.theta)

    def test_tiny_sample_degenerates(self):
        a = WeightedSample.unweighted([1.0, 2.0])
        with pytest.raises(NumericError):
            ratio_test(a, a, 0.0, B=200, seed=0)

    def test_rejects_small_bootstrap(self):
        a = WeightedSample.unweighted([1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            ratio_test(a, a, 0.0, B=50)

    def test_report_json_keys(self, rng):
        a = WeightedSample.unweighted(rng.lognormal(0, 0.5, 50))
        d = ratio_test(a, a, 0.0, B=100).to_dict()
        assert {"nu", "psi_hat", "theta", "p_value", "critical_values", "B", "seed"} <= set(d)
        assert "draws" not in d


class TestDefaults:
    def test_aversion_grid_and_replications(self):
        import inspect

        from housewelfare.dominance import sd_test
        from housewelfare.hedonic import residual_bootstrap_sd

        assert NU_GRID == (0.0, 1.0, 1.5, 2.0, 2.5)
        for fn in (ratio_test, sd_test, residual_bootstrap_sd):
            assert inspect.signature(fn).parameters["B"].default == 1000
