import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import CubicSpline

from extrapsens.elimination import Trajectory
from extrapsens.errors import DegenerateX, TooManyKnots
from extrapsens.estimator import OrbitEstimate
from extrapsens.extrapolation import (
    default_q_values,
    extrapolate_ensemble,
    fit_natural_spline,
    max_knots,
    natural_spline_basis,
    nearest_rank,
    select_knots_cv,
    uncertainty_interval,
)
from extrapsens.perturbation import TrajectoryEnsemble


def scalar_basis(x, knots):
    """Independent scalar evaluation of the natural cubic truncated-power basis."""
    t = [float(k) for k in knots]
    K = len(t)

    def cube(v):
        return v ** 3 if v > 0 else 0.0

    def d(k):
        return (cube(x - t[k]) - cube(x - t[K - 1])) / (t[K - 1] - t[k])

    return [1.0, float(x)] + [d(k) - d(K - 2) for k in range(K - 2)]


def make_ensemble(est, lower=None, upper=None):
    """Ensemble from an (m, J+1) array of estimates; row 0 is the observed trajectory."""
    est = np.asarray(est, dtype=float)
    lower = est - 1.0 if lower is None else np.asarray(lower, dtype=float)
    upper = est + 1.0 if upper is None else np.asarray(upper, dtype=float)
    m, J1 = est.shape
    names = tuple(f"c{i}" for i in range(J1 - 1))
    trajs = []
    for r in range(m):
        orbits = tuple(OrbitEstimate(names[:j], est[r, j], np.zeros(1), 0.0, lower[r, j],
                                     upper[r, j], r > 0) for j in range(J1))
        trajs.append(Trajectory(orbits, names[::-1], r > 0, r))
    return TrajectoryEnsemble(trajs[0], tuple(trajs[1:]), 0)


def oracle_percentile(values, p):
    # nearest rank with exact rational arithmetic
    v = sorted(values)
    rank = max(1, math.ceil(Fraction(p) * len(v)))
    return v[rank - 1]


def oracle_interval(lower, upper, trim, alpha):
    m = len(lower)
    k = math.floor(Fraction(trim) * m)
    lo = sorted(lower)[k:]
    hi = sorted(upper)[: m - k]
    return oracle_percentile(lo, Fraction(alpha) / 2), oracle_percentile(hi, 1 - Fraction(alpha) / 2)


@pytest.mark.parametrize("K", [0, 1, 3, 7])
def test_basis_matches_scalar_oracle(K):
    knots = np.linspace(0, 12, K + 2)
    x = np.linspace(-2, 18, 57)
    B = natural_spline_basis(x, knots)
    ref = np.array([scalar_basis(v, knots) for v in x])
    np.testing.assert_allclose(B, ref, rtol=0, atol=1e-10 * max(1.0, np.abs(ref).max()))


@pytest.mark.parametrize("J", [3, 8, 16, 40])
def test_interpolation_at_max_knots(J):
    rng = np.random.default_rng(J)
    x = np.arange(J + 1, dtype=float)
    y = np.cumsum(rng.normal(size=J + 1))
    s = fit_natural_spline(x, y, max_knots(J))
    np.testing.assert_allclose(s(x), y, atol=1e-8)
    # the interpolating natural spline is unique, so it must agree with scipy's
    mid = np.linspace(0, J, 7 * J + 1)
    np.testing.assert_allclose(s(mid), CubicSpline(x, y, bc_type="natural")(mid), atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.floats(-5, 5), st.floats(-2, 2), st.data())
def test_linear_data_reproduced(J, a, b, data):
    K = data.draw(st.integers(0, max_knots(J)))
    x = np.arange(J + 1, dtype=float)
    s = fit_natural_spline(x, a + b * x, K)
    xx = np.linspace(0, J + 10, 50)
    np.testing.assert_allclose(s(xx), a + b * xx, atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10_000), st.data())
def test_linear_beyond_boundary(J, seed, data):
    K = data.draw(st.integers(0, max_knots(J)))
    y = np.random.default_rng(seed).normal(size=J + 1)
    s = fit_natural_spline(np.arange(J + 1.0), y, K)
    p = s(J + np.array([1.0, 2.0, 3.0]))
    assert abs(p[2] - 2 * p[1] + p[0]) < 1e-8


def test_spline_errors():
    x = np.arange(5.0)
    with pytest.raises(TooManyKnots):
        fit_natural_spline(x, x, 4)
    with pytest.raises(DegenerateX):
        fit_natural_spline([0, 1, 1, 2], [0, 1, 2, 3], 0)
    with pytest.raises(DegenerateX):
        fit_natural_spline([0.0], [1.0], 0)


def test_default_q_values():
    assert default_q_values(16) == list(range(1, 9))
    assert default_q_values(5) == [1, 2, 3]
    assert default_q_values(1) == [1]


@pytest.mark.parametrize("m", [3, 40, 501])
def test_percentiles_match_sort_and_index(m):
    rng = np.random.default_rng(m)
    lower = rng.normal(size=m).tolist()
    upper = (np.array(lower) + rng.uniform(0.1, 1, m)).tolist()
    for trim in (0.0, 0.05, 0.1):
        for alpha in (0.05, 0.1):
            assert uncertainty_interval(lower, upper, trim, alpha) == \
                oracle_interval(lower, upper, Fraction(str(trim)), Fraction(str(alpha)))
    for p in (0.025, 0.5, 0.975):
        assert nearest_rank(lower, p) == oracle_percentile(lower, Fraction(str(p)))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=200), st.floats(0, 0.45),
       st.floats(0, 0.45))
def test_trim_never_widens(vals, t1, t2):
    lo = np.array(vals)
    hi = lo + 1.0
    small, big = sorted((t1, t2))
    a = uncertainty_interval(lo, hi, small)
    b = uncertainty_interval(lo, hi, big)
    assert b[0] >= a[0] and b[1] <= a[1]


def test_constant_ensemble():
    J, c, d = 6, 0.3, 0.1
    est = np.full((11, J + 1), c)
    ens = make_ensemble(est, est - d, est + d)
    for K in (0, 2, max_knots(J)):
        res = extrapolate_ensemble(ens, K, [1, 2, 3], trim=0.05)
        np.testing.assert_allclose(res.uncertainty_lower, c - d, atol=1e-12)
        np.testing.assert_allclose(res.uncertainty_upper, c + d, atol=1e-12)
        np.testing.assert_allclose(res.predicted_effects, c, atol=1e-12)
        assert res.crossing_q is None and res.baseline_excludes_zero


def test_forty_trajectory_ensemble_against_oracle():
    # constant trajectories with distinct levels extrapolate to known endpoints
    rng = np.random.default_rng(40)
    J = 5
    level = rng.normal(size=40)
    half = rng.uniform(0.05, 0.5, 40)
    est = np.repeat(level[:, None], J + 1, axis=1)
    ens = make_ensemble(est, est - half[:, None], est + half[:, None])
    res = extrapolate_ensemble(ens, max_knots(J), [1, 4], trim=0.05)
    for c in range(2):
        np.testing.assert_allclose(res.predicted_lower[:, c], level - half, atol=1e-12)
        lo, hi = res.predicted_lower[:, c].tolist(), res.predicted_upper[:, c].tolist()
        assert (res.uncertainty_lower[c], res.uncertainty_upper[c]) == \
            oracle_interval(lo, hi, Fraction(5, 100), Fraction(5, 100))
        assert res.effect_lower[c] == oracle_percentile(res.predicted_effects[:, c],
                                                        Fraction(25, 1000))


def test_crossing_q_for_declining_trend():
    # every trajectory declines by 0.1 per orbit from 1.0; CI half-width 0.25
    J = 8
    x = np.arange(J + 1)
    est = np.vstack([1.8 - 0.1 * x + 0.01 * r for r in range(21)])
    res = extrapolate_ensemble(make_ensemble(est, est - 0.25, est + 0.25), 2,
                               list(range(1, 9)), trim=0.0)
    assert res.baseline_excludes_zero
    # lowest lower endpoint at J+q is 1.0 - 0.1 q - 0.25, zero reached at q = 7.5
    assert res.crossing_q == 8
    excl = res.excludes_zero()
    assert excl[:7].all() and not excl[7]
    np.testing.assert_array_equal(res.covers(0.0), ~excl)


def test_crossed_endpoints_are_reordered():
    J = 4
    x = np.arange(J + 1.0)
    est = np.vstack([np.zeros(J + 1)] * 3)
    lower = np.vstack([-1 + 0.5 * x] * 3)
    upper = np.vstack([1 - 0.5 * x] * 3)
    res = extrapolate_ensemble(make_ensemble(est, lower, upper), 0, [2], trim=0.0)
    assert np.all(res.predicted_lower <= res.predicted_upper)
    np.testing.assert_allclose(res.predicted_lower[:, 0], -2.0, atol=1e-12)


def test_cv_prefers_few_knots_for_smooth_truth():
    J = 16
    x = np.arange(J + 1.0)
    truth = 0.5 - 0.02 * x + 0.003 * x ** 2
    small = 0
    for seed in range(50):
        rng = np.random.default_rng([16, seed])
        est = truth + rng.normal(scale=0.05, size=(51, J + 1))
        K = select_knots_cv(make_ensemble(est), range(0, max_knots(J) + 1))
        small += K < max_knots(J)
    assert small >= 40


def test_cv_rejects_inadmissible_knots():
    ens = make_ensemble(np.zeros((3, 5)))
    with pytest.raises(TooManyKnots):
        select_knots_cv(ens, [0, 4])


def test_argument_checks():
    ens = make_ensemble(np.zeros((3, 5)))
    with pytest.raises(ValueError):
        extrapolate_ensemble(ens, 1, [0])
    with pytest.raises(ValueError):
        extrapolate_ensemble(ens, 1, [1], trim=0.5)
