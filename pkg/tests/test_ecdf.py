"""Tests for the piecewise-linear empirical CDF kernel."""

import numpy as np
import pytest

from scenopt.ecdf import (
    SortedSample,
    break_ties,
    ecdf_eval,
    ecdf_inverse,
    prepare_values,
    quantile_of,
)


def ecdf_oracle(vals, z):
    """Direct scan evaluation of the piecewise-linear CDF (independent path)."""
    n = len(vals)
    if z <= vals[0]:
        return 0.0
    if z > vals[-1]:
        return 1.0
    for i in range(1, n):  # 1-based bracket index
        if vals[i - 1] < z <= vals[i]:
            return (i - 1 + (z - vals[i - 1]) / (vals[i] - vals[i - 1])) / (n - 1)
    raise AssertionError("unreachable")


def inverse_oracle(vals, alpha):
    """Direct enumeration of the inverse-CDF index rule (independent path)."""
    n = len(vals)
    if alpha == 0.0:
        return vals[0]
    if alpha == 1.0:
        return vals[-1]
    t = alpha * (n - 1)
    feasible = [j for j in range(1, n) if j - 1 <= t]
    i = max(feasible)  # minimizes t - j + 1 over feasible j
    return vals[i - 1] + (vals[i] - vals[i - 1]) * (t - i + 1)


class TestEcdfEval:
    def test_below_first_value(self):
        assert ecdf_eval(SortedSample(np.array([1.0, 2.0, 3.0])), 0.5) == 0.0

    def test_interior_interpolation(self):
        assert ecdf_eval(SortedSample(np.array([1.0, 2.0, 3.0])), 2.5) == pytest.approx(0.75, abs=1e-15)

    def test_above_last_value(self):
        assert ecdf_eval(SortedSample(np.array([1.0, 2.0, 3.0])), 10.0) == 1.0

    def test_endpoints(self):
        s = SortedSample(np.array([1.0, 2.0, 3.0]))
        assert ecdf_eval(s, 1.0) == 0.0
        assert ecdf_eval(s, 3.0) == 1.0

    def test_singleton_is_step(self):
        s = SortedSample(np.array([4.0]))
        assert ecdf_eval(s, 3.9) == 0.0
        assert ecdf_eval(s, 4.0) == 1.0
        assert ecdf_eval(s, 4.1) == 1.0

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            SortedSample(np.array([]))

    def test_non_increasing_rejected(self):
        with pytest.raises(ValueError):
            SortedSample(np.array([1.0, 1.0, 2.0]))


class TestEcdfInverse:
    def test_alpha_zero_gives_first(self):
        assert ecdf_inverse(SortedSample(np.array([1.0, 2.0, 3.0])), 0.0) == 1.0

    def test_alpha_half(self):
        assert ecdf_inverse(SortedSample(np.array([1.0, 2.0, 3.0])), 0.5) == 2.0

    def test_interior_interpolation(self):
        assert ecdf_inverse(SortedSample(np.array([1.0, 2.0, 5.0])), 2.0 / 3.0) == pytest.approx(3.0, abs=1e-12)

    def test_alpha_one_gives_last(self):
        assert ecdf_inverse(SortedSample(np.array([1.0, 2.0, 3.0])), 1.0) == 3.0

    def test_alpha_out_of_range(self):
        s = SortedSample(np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            ecdf_inverse(s, -0.01)
        with pytest.raises(ValueError):
            ecdf_inverse(s, 1.01)

    def test_singleton_constant(self):
        s = SortedSample(np.array([7.0]))
        for a in (0.0, 0.3, 1.0):
            assert ecdf_inverse(s, a) == 7.0


class TestBreakTies:
    def test_single_duplicate_pair(self):
        out = break_ties([1.0, 1.0, 2.0], 1e-9).values
        np.testing.assert_allclose(out, [1.0, 1.0 + 1e-9, 2.0], rtol=0, atol=0)

    def test_triple_tie(self):
        out = break_ties([3.0, 3.0, 3.0], 1e-9).values
        np.testing.assert_allclose(out, [3.0, 3.0 + 1e-9, 3.0 + 2e-9], rtol=0, atol=1e-24)

    def test_no_ties_unchanged(self):
        out = break_ties([1.0, 2.0, 3.0], 1e-9).values
        np.testing.assert_array_equal(out, [1.0, 2.0, 3.0])

    def test_unsorted_input(self):
        out = break_ties([2.0, 1.0, 1.0], 1e-9).values
        np.testing.assert_allclose(out, [1.0, 1.0 + 1e-9, 2.0])

    def test_output_always_strict(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            vals = np.round(rng.normal(size=rng.integers(1, 12)), 1)
            out = break_ties(vals, 1e-9).values
            assert np.all(np.diff(out) > 0) or out.size == 1

    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            break_ties([1.0, 2.0], 0.0)


class TestBruteForceOracle:
    def test_eval_matches_scan_on_random_samples(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            n = int(rng.integers(2, 11))
            vals = np.sort(rng.normal(scale=5.0, size=n))
            while np.any(np.diff(vals) <= 0):
                vals = np.sort(rng.normal(scale=5.0, size=n))
            s = SortedSample(vals)
            for z in rng.uniform(vals[0] - 1, vals[-1] + 1, size=5):
                assert abs(ecdf_eval(s, z) - ecdf_oracle(vals, z)) <= 1e-12

    def test_inverse_matches_enumeration(self):
        rng = np.random.default_rng(43)
        for _ in range(1000):
            n = int(rng.integers(2, 11))
            vals = np.sort(rng.normal(scale=5.0, size=n))
            while np.any(np.diff(vals) <= 0):
                vals = np.sort(rng.normal(scale=5.0, size=n))
            s = SortedSample(vals)
            for a in rng.uniform(0, 1, size=5):
                assert abs(ecdf_inverse(s, a) - inverse_oracle(vals, a)) <= 1e-12


class TestProperties:
    def test_round_trip_identity(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            n = int(rng.integers(2, 30))
            vals = np.unique(rng.normal(scale=3.0, size=n))
            if vals.size < 2:
                continue
            s = SortedSample(vals)
            for z in rng.uniform(vals[0], vals[-1], size=4):
                back = ecdf_inverse(s, ecdf_eval(s, z))
                assert abs(back - z) <= 1e-12 * max(1.0, abs(z))

    def test_order_statistic_agreement_exact(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            n = int(rng.integers(2, 25))
            vals = np.unique(rng.normal(scale=10.0, size=n))
            n = vals.size
            if n < 2:
                continue
            s = SortedSample(vals)
            for i in range(1, n + 1):
                assert ecdf_inverse(s, (i - 1) / (n - 1)) == vals[i - 1]

    def test_monotone_and_onto(self):
        s = SortedSample(np.array([-2.0, 0.5, 0.9, 4.0]))
        zs = np.linspace(-3, 5, 200)
        ps = [ecdf_eval(s, z) for z in zs]
        assert all(b >= a for a, b in zip(ps, ps[1:]))
        assert ps[0] == 0.0 and ps[-1] == 1.0
        alphas = np.linspace(0, 1, 200)
        qs = [ecdf_inverse(s, a) for a in alphas]
        assert all(b >= a - 1e-15 for a, b in zip(qs, qs[1:]))

    def test_inverse_continuity_at_knots(self):
        s = SortedSample(np.array([1.0, 2.0, 5.0, 6.0]))
        for i in range(1, 4):
            knot = i / 3.0
            lo = ecdf_inverse(s, max(0.0, knot - 1e-12))
            hi = ecdf_inverse(s, min(1.0, knot + 1e-12))
            assert abs(hi - lo) < 1e-10

    def test_gradient_matches_chain_rule(self):
        # z(theta, delta) smooth, sort order locally fixed: the quantile's
        # finite-difference derivative in theta must match the chain rule
        # applied to the two bracketing order statistics.
        deltas = np.array([0.3, 1.7, 2.9, 4.1])
        alpha = 0.4
        theta0 = 1.3

        def zfun(theta):
            return theta**2 * deltas + theta * np.sin(deltas)

        def quantile(theta):
            return ecdf_inverse(break_ties(zfun(theta)), alpha)

        order = np.argsort(zfun(theta0))
        n = deltas.size
        t = alpha * (n - 1)
        i = int(np.floor(t)) + 1
        w = t - i + 1
        dz = 2 * theta0 * deltas + np.sin(deltas)
        analytic = (1 - w) * dz[order[i - 1]] + w * dz[order[i]]

        h = 1e-6
        fd = (quantile(theta0 + h) - quantile(theta0 - h)) / (2 * h)
        assert fd == pytest.approx(analytic, rel=1e-5)


class TestVectorizedHelpers:
    def test_prepare_values_matches_break_ties(self):
        rng = np.random.default_rng(11)
        raw = np.round(rng.normal(size=(20, 9)), 1)
        prepared = prepare_values(raw)
        for row_raw, row_prep in zip(raw, prepared):
            expected = prepare_values(row_raw)
            np.testing.assert_array_equal(row_prep, expected)
            assert np.all(np.diff(row_prep) > 0)

    def test_quantile_of_matches_scalar_path(self):
        rng = np.random.default_rng(12)
        raw = rng.normal(size=(50, 7))
        for a in (0.0, 0.25, 0.6, 0.95, 1.0):
            batch = quantile_of(raw, a)
            scalar = [ecdf_inverse(break_ties(row), a) for row in raw]
            np.testing.assert_allclose(batch, scalar, rtol=0, atol=1e-14)

    def test_quantile_of_singleton_axis(self):
        raw = np.array([[3.0], [5.0]])
        np.testing.assert_array_equal(quantile_of(raw, 0.7), [3.0, 5.0])
