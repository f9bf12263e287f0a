import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from evtrisk import fixtures
from evtrisk.bootstrap import (
    BootstrapConfig,
    bootstrap_many,
    bootstrap_risk,
    resample_losses,
    substream,
    var_index,
)
from evtrisk.gpd import gpd_cdf
from evtrisk.risk import RiskSpec, pot_quantile, pot_var

CORN1_LONG = fixtures.reference_fit("corn-reg1-long")
VAR99 = RiskSpec("VaR", alpha=0.99)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            BootstrapConfig(resamples=1)
        with pytest.raises(ValueError):
            BootstrapConfig(ci_level=1.0)
        with pytest.raises(ValueError):
            BootstrapConfig(es_method="median")
        assert BootstrapConfig().resamples == 5000


class TestResample:
    def test_grid_reproduces_fitted_curve(self):
        n = CORN1_LONG.n
        grid = np.arange(1, n + 1) / (n + 1)
        p, q = resample_losses(CORN1_LONG, seed=0, probs=grid)
        np.testing.assert_array_equal(q, pot_quantile(CORN1_LONG, grid))

    @given(st.integers(0, 2**31), st.integers(0, 10_000))
    def test_sorted_and_nondecreasing(self, seed, j):
        p, q = resample_losses(CORN1_LONG, seed, j, size=300)
        assert np.all(np.diff(p) >= 0)
        assert np.all(np.diff(q) >= 0)
        assert len(p) == 300

    def test_default_size_is_fit_n(self):
        p, q = resample_losses(CORN1_LONG, seed=1)
        assert len(q) == CORN1_LONG.n

    def test_tail_law(self):
        # resampled losses above u follow the fitted GPD
        fit = CORN1_LONG
        ys = np.concatenate([resample_losses(fit, 3, j)[1] for j in range(40)])
        exc = ys[ys > fit.u] - fit.u
        assert stats.kstest(exc, lambda x: gpd_cdf(x, fit.params)).pvalue > 0.01
        assert len(exc) / len(ys) == pytest.approx(fit.exceedance_rate, abs=0.01)

    def test_substreams_differ(self):
        a = substream(1, 0).random(5)
        b = substream(1, 1).random(5)
        c = substream(2, 0).random(5)
        assert not np.array_equal(a, b) and not np.array_equal(a, c)
        np.testing.assert_array_equal(a, substream(1, 0).random(5))


class TestIndex:
    def test_ceil_rule(self):
        assert var_index(0.99, 1462) == math.ceil(0.99 * 1462) - 1 == 1447
        assert var_index(0.99, 1000) == 989  # 0.99*1000 is 990 exactly

    def test_too_extreme(self):
        with pytest.raises(ValueError):
            var_index(0.9999, 100)
        with pytest.raises(ValueError):
            bootstrap_risk(CORN1_LONG, RiskSpec("VaR", alpha=0.99999), BootstrapConfig(resamples=10))


@pytest.fixture(scope="module")
def corn_results():
    specs = [RiskSpec(m, alpha=a) for m in ("VaR", "ES") for a in (0.99, 0.995, 0.999)]
    specs.append(RiskSpec("SRM", risk_aversion=20.0))
    return dict(zip(["v99", "v995", "v999", "e99", "e995", "e999", "s20"], bootstrap_many(CORN1_LONG, specs, BootstrapConfig(resamples=5000, seed=1, keep_estimates=True))))


class TestBootstrap:
    def test_reference_se(self, corn_results):
        assert corn_results["v99"].se == pytest.approx(0.678, rel=0.2)

    def test_reference_standardized_ci(self, corn_results):
        lb, ub = corn_results["v999"].ci_standardized
        assert lb == pytest.approx(0.800, abs=0.03)
        assert ub == pytest.approx(1.255, abs=0.03)

    def test_result_invariants(self, corn_results):
        for r in corn_results.values():
            lo, hi = r.ci_raw
            assert lo <= hi
            assert r.ci_standardized == pytest.approx((lo / r.mean, hi / r.mean))
            assert r.ci_standardized[0] <= 1 <= r.ci_standardized[1]
            assert r.mean == pytest.approx(np.mean(r.resample_estimates))
            assert r.se == pytest.approx(np.std(r.resample_estimates, ddof=1))

    def test_es_is_formula_of_var(self, corn_results):
        xi = CORN1_LONG.xi
        assert corn_results["e99"].se == pytest.approx(corn_results["v99"].se / (1 - xi), rel=1e-12)

    def test_se_rises_with_alpha(self, corn_results):
        assert corn_results["v99"].se < corn_results["v995"].se < corn_results["v999"].se
        assert corn_results["e99"].se < corn_results["e995"].se < corn_results["e999"].se

    def test_right_asymmetry(self, corn_results):
        lb, ub = corn_results["v999"].ci_standardized
        assert ub - 1 > 1 - lb

    def test_mean_converges_to_plug_in(self, corn_results):
        r = corn_results["v99"]
        plug_in = pot_var(CORN1_LONG, 0.99)
        # the order-statistic estimator is consistent, with O(1/n) bias
        assert abs(r.mean - plug_in) <= 2 * r.se / math.sqrt(5000) + 0.02

    def test_point_is_plug_in(self, corn_results):
        assert corn_results["v99"].point == pot_var(CORN1_LONG, 0.99)

    def test_non_degenerate(self):
        r = bootstrap_risk(CORN1_LONG, VAR99, BootstrapConfig(resamples=2, seed=4))
        assert r.se > 0

    def test_deterministic_and_worker_invariant(self):
        specs = [VAR99, RiskSpec("ES", alpha=0.995), RiskSpec("SRM", risk_aversion=100.0)]
        cfg = BootstrapConfig(resamples=700, seed=9)
        a = bootstrap_many(CORN1_LONG, specs, cfg)
        b = bootstrap_many(CORN1_LONG, specs, cfg)
        c = bootstrap_many(CORN1_LONG, specs, BootstrapConfig(resamples=700, seed=9, workers=6))
        assert [r.to_dict() for r in a] == [r.to_dict() for r in b] == [r.to_dict() for r in c]

    def test_many_equals_single(self):
        cfg = BootstrapConfig(resamples=300, seed=2)
        many = bootstrap_many(CORN1_LONG, [VAR99, RiskSpec("ES", alpha=0.99)], cfg)
        assert many[0].to_dict() == bootstrap_risk(CORN1_LONG, VAR99, cfg).to_dict()

    def test_tail_mean_option(self):
        spec = RiskSpec("ES", alpha=0.99)
        a = bootstrap_risk(CORN1_LONG, spec, BootstrapConfig(resamples=400, seed=3))
        b = bootstrap_risk(CORN1_LONG, spec, BootstrapConfig(resamples=400, seed=3, es_method="tail_mean"))
        assert a.mean == pytest.approx(b.mean, rel=0.05)
        assert a.se != b.se

    def test_gaussian_rejected(self):
        with pytest.raises(ValueError):
            bootstrap_risk(CORN1_LONG, RiskSpec("VaR", "Gaussian", alpha=0.99), BootstrapConfig(resamples=10))

    def test_srm_draws_none_uses_fit_n(self):
        spec = RiskSpec("SRM", risk_aversion=20.0)
        a = bootstrap_risk(CORN1_LONG, spec, BootstrapConfig(resamples=50, seed=1, srm_draws=None))
        b = bootstrap_risk(CORN1_LONG, spec, BootstrapConfig(resamples=50, seed=1, srm_draws=CORN1_LONG.n))
        assert a.to_dict() == b.to_dict()

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**20))
    def test_standardized_brackets_one(self, seed):
        r = bootstrap_risk(CORN1_LONG, VAR99, BootstrapConfig(resamples=200, seed=seed))
        assert r.ci_standardized[0] <= 1 <= r.ci_standardized[1]
