import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evtrisk import fixtures
from evtrisk.errors import NumericalError
from evtrisk.quadrature import (
    CHUNK,
    RULES,
    QuadratureSpec,
    _grid_weights,
    integrate,
    niederreiter_sequence,
    weyl_sequence,
)
from evtrisk.risk import exp_weight, pot_quantile


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            QuadratureSpec("gauss", 10)
        with pytest.raises(ValueError):
            QuadratureSpec("trapezoid", 1)
        with pytest.raises(ValueError):
            QuadratureSpec("trapezoid", 10.5)
        assert QuadratureSpec("Simpson", 10).rule == "simpson"


class TestWeyl:
    def test_first_points(self):
        mpmath.mp.dps = 30
        want = [float(mpmath.frac(k * mpmath.sqrt(2))) for k in (1, 2, 3)]
        np.testing.assert_allclose(weyl_sequence(3), want, atol=1e-15)
        np.testing.assert_allclose(weyl_sequence(3), [0.41421, 0.82843, 0.24264], atol=1e-5)

    def test_exact_for_large_indices(self):
        mpmath.mp.dps = 40
        ks = [10**6 + 7, 12_345_678, 19_999_999]
        got = weyl_sequence(1, start=ks[0]).tolist() + weyl_sequence(1, start=ks[1]).tolist() + weyl_sequence(1, start=ks[2]).tolist()
        want = [float(mpmath.frac(k * mpmath.sqrt(2))) for k in ks]
        np.testing.assert_allclose(got, want, atol=1e-15)

    def test_open_interval(self):
        x = weyl_sequence(100_000)
        assert np.all((x > 0) & (x < 1))

    def test_discrepancy(self):
        x = weyl_sequence(10_000)
        counts = np.bincount(np.minimum((x * 1000).astype(int), 999), minlength=1000)
        # star discrepancy over the cell edges of a 1000-cell partition
        d = np.max(np.abs(np.cumsum(counts) / 10_000 - np.arange(1, 1001) / 1000))
        assert d < 0.01


class TestNiederreiter:
    def test_first_points(self):
        np.testing.assert_array_equal(niederreiter_sequence(7), [0.5, 0.25, 0.75, 0.125, 0.625, 0.375, 0.875])

    def test_radical_inverse_oracle(self):
        def ri(k):
            v, f = Fraction(0), Fraction(1, 2)
            while k:
                v += f * (k & 1)
                k >>= 1
                f /= 2
            return float(v)

        ks = [1, 2, 3, 1023, 1024, 99_999, 2**40 + 5]
        got = [niederreiter_sequence(1, start=k)[0] for k in ks]
        assert got == [ri(k) for k in ks]

    def test_open_interval(self):
        x = niederreiter_sequence(2**16)
        assert np.all((x > 0) & (x < 1))

    @pytest.mark.parametrize("k", range(1, 11))
    def test_dyadic_stratification(self, k):
        x = niederreiter_sequence(2**k - 1)
        counts = np.bincount((x * 2**k).astype(int), minlength=2**k)
        assert counts.max() - counts.min() <= 1


class TestWeights:
    @given(st.integers(2, 400))
    def test_weights_sum_to_slices(self, N):
        k = np.arange(1, N + 1)
        for rule in ("trapezoid", "simpson"):
            assert math.isclose(_grid_weights(k, N, rule).sum(), N, rel_tol=1e-12)

    def test_simpson_pattern_odd_and_even(self):
        np.testing.assert_allclose(_grid_weights(np.arange(1, 6), 5, "simpson"), [4 / 3, 4 / 3, 2 / 3, 4 / 3, 1 / 3])
        np.testing.assert_allclose(_grid_weights(np.arange(1, 7), 6, "simpson"), [2, 1 / 3, 4 / 3, 2 / 3, 4 / 3, 1 / 3])


class TestIntegrate:
    @pytest.mark.parametrize("rule", RULES)
    @pytest.mark.parametrize("N", [2, 3, 10, 999, 1000, 100_000])
    def test_constant(self, rule, N):
        v = integrate(lambda p: np.ones_like(p), QuadratureSpec(rule, N))
        assert abs(v - 1) <= 1 / (N + 1) + 1e-12

    def test_linear_trapezoid(self):
        assert abs(integrate(lambda p: p, QuadratureSpec("trapezoid", 10**6)) - 0.5) <= 1e-6

    @pytest.mark.parametrize("f, exact", [
        (lambda p: np.sin(3 * p), (1 - math.cos(3)) / 3),
        (lambda p: np.exp(p), math.e - 1),
        (lambda p: 1 / (1 + p * p), math.pi / 4),
    ])
    def test_trapezoid_simpson_agree(self, f, exact):
        t = integrate(f, QuadratureSpec("trapezoid", 10**6))
        s = integrate(f, QuadratureSpec("simpson", 10**6))
        assert abs(t - s) <= 1e-6
        assert abs(t - exact) <= 5e-6

    def test_non_finite_names_node(self):
        with pytest.raises(NumericalError, match="node"):
            integrate(lambda p: np.where(p > 0.5, np.nan, 1.0), QuadratureSpec("trapezoid", 100))

    @pytest.mark.parametrize("rule", RULES)
    def test_deterministic_and_parallel_invariant(self, rule):
        fit = fixtures.benchmark_fit()
        f = lambda p: exp_weight(p, 100) * pot_quantile(fit, p)
        spec = QuadratureSpec(rule, 3 * CHUNK + 17)
        a = integrate(f, spec)
        assert integrate(f, spec) == a
        assert integrate(f, spec, workers=8) == a

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.sampled_from(RULES))
    def test_linearity(self, a, b, rule):
        spec = QuadratureSpec(rule, 5000)
        lhs = integrate(lambda p: a * np.sin(p) + b * p * p, spec)
        rhs = a * integrate(np.sin, spec) + b * integrate(lambda p: p * p, spec)
        assert lhs == pytest.approx(rhs, abs=1e-12)


@pytest.fixture(scope="module")
def grid():
    fit = fixtures.benchmark_fit()
    f = lambda p: exp_weight(p, 100) * pot_quantile(fit, p)
    ns = (1_000, 10_000, 100_000, 1_000_000, 10_000_000, 20_000_000)
    return {r: [integrate(f, QuadratureSpec(r, N)) for N in ns] for r in RULES}


@pytest.mark.slow
class TestBenchmarkConvergence:
    """Behaviour on the spectral integrand with the benchmark parameters."""

    @pytest.mark.parametrize("rule", RULES)
    def test_error_shrinks_monotonically(self, rule, grid):
        ref = grid[rule][-1]
        errs = [abs(v - ref) for v in grid[rule][:-1]]
        assert all(a > b for a, b in zip(errs, errs[1:]))

    @pytest.mark.parametrize("rule", RULES)
    def test_negative_bias(self, rule, grid):
        ref = grid[rule][-1]
        assert all(v < ref for v in grid[rule][:4])

    def test_trapezoid_reference_column(self, grid):
        published = fixtures.reference_values()["quadrature_benchmark"]["estimates"]["trapezoid"]
        for v, N in zip(grid["trapezoid"], (1_000, 10_000, 100_000, 1_000_000, 10_000_000, 20_000_000)):
            assert v == pytest.approx(published[str(N)], abs=0.005 if N >= 10_000 else 0.02)

    def test_simpson_reference_column(self, grid):
        published = fixtures.reference_values()["quadrature_benchmark"]["estimates"]["simpson"]
        for v, N in zip(grid["simpson"], (1_000, 10_000, 100_000, 1_000_000, 10_000_000, 20_000_000)):
            assert v == pytest.approx(published[str(N)], abs=0.005)

    @pytest.mark.parametrize("N_index, N", [(2, 100_000), (3, 1_000_000), (4, 10_000_000)])
    def test_qmc_rules_agree_within_001(self, grid, N_index, N):
        # Required at N >= 1e5. With the canonical sequences the two rules
        # differ by about 0.056 at 1e5, so that column fails (see notes).
        assert abs(grid["weyl"][N_index] - grid["niederreiter"][N_index]) <= 0.01
