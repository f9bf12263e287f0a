import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from evtrisk import fixtures
from evtrisk.diagnostics import (
    fitted_exceedance_curve,
    qq_normal,
    tail_stability_scan,
    threshold_from_count,
)
from evtrisk.errors import DataError
from evtrisk.gpd import GpdParams, exceedances, fit_gpd, gpd_sample
from evtrisk.timeseries import (
    CompositeSpec,
    GaussianSpec,
    TailSpec,
    generate_synthetic_returns,
    to_loss_series,
)


class TestQQ:
    def test_diagonal_on_exact_quantiles(self):
        n = 200
        x = 0.3 + 2.0 * special.ndtri((np.arange(1, n + 1) - 0.5) / n)
        pairs = qq_normal(x, mu=0.3, sigma=2.0)
        np.testing.assert_allclose(pairs[:, 0], pairs[:, 1], atol=1e-10)

    def test_length_and_sorting(self):
        x = generate_synthetic_returns(GaussianSpec(0, 1), 123, seed=1).returns
        pairs = qq_normal(x)
        assert pairs.shape == (123, 2)
        assert np.all(np.diff(pairs[:, 1]) >= 0)

    def test_heavy_tails_fall_outside(self):
        spec = CompositeSpec(0, 2, TailSpec(0.2, 2.0, 3.0, 0.07), TailSpec(0.2, 2.0, 3.0, 0.07))
        x = generate_synthetic_returns(spec, 3000, seed=8).returns
        pairs = qq_normal(x)
        lo, hi = pairs[:15], pairs[-15:]
        assert np.all(np.abs(lo[:, 1]) > np.abs(lo[:, 0]))
        assert np.all(np.abs(hi[:, 1]) > np.abs(hi[:, 0]))

    @settings(max_examples=30)
    @given(st.floats(0.1, 10), st.floats(-5, 5), st.integers(0, 1000))
    def test_affine_equivariance(self, a, b, seed):
        x = generate_synthetic_returns(GaussianSpec(0, 1), 50, seed=seed).returns
        p, q = qq_normal(x), qq_normal(a * x + b)
        np.testing.assert_allclose(q, a * p + b, rtol=1e-9, atol=1e-9)

    def test_errors(self):
        with pytest.raises(DataError):
            qq_normal(np.arange(5.0))
        with pytest.raises(DataError):
            qq_normal(np.ones(20))


def _gpd_tailed_losses(seed, n=3000):
    spec = CompositeSpec(0, 2, TailSpec(0.1, 1.5, 3.0, 0.15), None)
    return to_loss_series(generate_synthetic_returns(spec, n, seed=seed, label="sim"), "long")


class TestScan:
    def test_length_order_and_bookkeeping(self):
        ls = _gpd_tailed_losses(1)
        counts = [300, 50, 120, 200]
        scan = tail_stability_scan(ls, counts)
        assert len(scan) == 4
        assert [e.requested for e in scan] == counts
        for e in scan:
            assert e.ok
            assert threshold_from_count(ls, e.n_u) == e.u
            assert e.ci_low <= e.xi_hat <= e.ci_high
            assert e.tail_index == pytest.approx(1 / e.xi_hat)

    def test_counts_vs_thresholds_monotone(self):
        scan = tail_stability_scan(_gpd_tailed_losses(2), list(range(400, 40, -20)))
        n_u = [e.n_u for e in scan]
        u = [e.u for e in scan]
        assert all(a > b for a, b in zip(n_u, n_u[1:]))
        assert all(a <= b for a, b in zip(u, u[1:]))

    def test_coverage_of_true_shape(self):
        # Entries of one scan share most of their data, so a single dataset
        # is close to a single draw. Coverage is pooled over seeds 0..99.
        covered = []
        for seed in range(100):
            scan = tail_stability_scan(_gpd_tailed_losses(seed), list(range(40, 441, 20)))
            covered += [e.ci_low <= 0.1 <= e.ci_high for e in scan if e.ok]
        assert sum(covered) / len(covered) >= 0.9

    def test_per_entry_failures(self):
        ls = _gpd_tailed_losses(4, n=500)
        scan = tail_stability_scan(ls, [5, 100, 10_000])
        assert [e.ok for e in scan] == [False, True, False]
        assert "too few" in scan.entries[0].error
        assert len(scan.rows()) == 3

    def test_workers_do_not_change_output(self):
        ls = _gpd_tailed_losses(5)
        counts = list(range(30, 400, 30))
        assert tail_stability_scan(ls, counts).rows() == tail_stability_scan(ls, counts, workers=6).rows()

    def test_plateau_on_fixture_data(self):
        spec = fixtures.reference_composite("corn-reg1")
        r = generate_synthetic_returns(spec, 1461, seed=12, label="corn-reg1")
        scan = tail_stability_scan(to_loss_series(r, "long"), list(range(100, 301, 10)))
        xi = [e.xi_hat for e in scan if e.ok]
        assert np.std(xi) < 0.1


class TestExceedanceCurve:
    def test_columns(self):
        y = gpd_sample(GpdParams(0.1, 1.0), 400, seed=1)
        fit = fit_gpd(y, threshold_value=0.0)
        curve = fitted_exceedance_curve(fit, exceedances(y, 0.0))
        assert curve.shape == (fit.n_u, 3)
        np.testing.assert_allclose(curve[:, 1], np.arange(1, 401) / 401)
        assert np.all(np.diff(curve[:, 2]) >= 0)

    def test_ks_bound_on_model_data(self):
        y = gpd_sample(GpdParams(0.2, 2.0), 800, seed=21)
        fit = fit_gpd(y, threshold_value=0.0)
        curve = fitted_exceedance_curve(fit, exceedances(y, 0.0))
        assert np.max(np.abs(curve[:, 1] - curve[:, 2])) < 1.63 / math.sqrt(fit.n_u)

    def test_empirical_column_parameter_free(self):
        y = np.sort(gpd_sample(GpdParams(0.1, 1.0), 100, seed=3))
        fit_a = fit_gpd(y, threshold_value=0.0)
        fit_b = fixtures.reference_fit("corn-reg1-long")
        a = fitted_exceedance_curve(fit_a, y)
        b = fitted_exceedance_curve(fit_b, y)
        np.testing.assert_array_equal(a[:, 1], b[:, 1])
