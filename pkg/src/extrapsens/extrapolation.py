"""Natural cubic spline fits to trajectories and extrapolation beyond them.

Each trajectory is a curve over ``x = 0..J`` (number of covariates adjusted
for). A natural cubic spline is linear beyond its boundary knots, so
evaluating it at ``J + q`` extrapolates the trend to ``q`` further,
hypothetical confounders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateX, TooManyKnots
from .perturbation import TrajectoryEnsemble

DEFAULT_TRIM = 0.05


def natural_spline_basis(x, knots) -> np.ndarray:
    """Truncated-power basis of natural cubic splines with the given knots.

    Columns are ``1, x, N_1(x), ..., N_{K}(x)`` for ``K + 2`` knots, with
    ``N_k = d_k - d_{K+1}`` and
    ``d_k(x) = ((x - t_k)_+^3 - (x - t_last)_+^3) / (t_last - t_k)``.
    """
    x = np.asarray(x, dtype=float).ravel()
    t = np.asarray(knots, dtype=float)
    cols = [np.ones_like(x), x]
    if t.size > 2:
        cube = np.maximum(x[:, None] - t[None, :], 0.0) ** 3
        d = (cube[:, :-1] - cube[:, -1:]) / (t[-1] - t[:-1])
        cols.extend((d[:, :-1] - d[:, -1:]).T)
    return np.column_stack(cols)


@dataclass(frozen=True, eq=False)
class SplineFit:
    interior_knots: int
    boundary_knots: tuple[float, float]
    coefficients: np.ndarray
    knots: np.ndarray = field(repr=False)

    def basis(self, x) -> np.ndarray:
        return natural_spline_basis(x, self.knots)

    def predict(self, x) -> np.ndarray:
        return self.basis(x) @ self.coefficients

    __call__ = predict


def knot_vector(lo: float, hi: float, interior_knots: int) -> np.ndarray:
    return np.linspace(lo, hi, interior_knots + 2)


def fit_natural_spline(x, y, interior_knots: int) -> SplineFit:
    """Least-squares natural cubic spline with evenly spaced interior knots.

    Boundary knots sit at ``min(x)`` and ``max(x)``. With
    ``interior_knots == len(x) - 2`` the fit interpolates.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    K = int(interior_knots)
    if x.shape != y.shape:
        raise DegenerateX("x and y must have equal length")
    if x.size < 2 or np.any(np.diff(x) <= 0) or not np.all(np.isfinite(x)):
        raise DegenerateX("x must hold at least two strictly increasing finite values")
    if K < 0 or K + 2 > x.size:
        raise TooManyKnots(f"{K} interior knots need at least {K + 2} points, got {x.size}")
    knots = knot_vector(x[0], x[-1], K)
    B = natural_spline_basis(x, knots)
    scale = np.abs(B).max(axis=0)
    scale[scale == 0] = 1.0
    coef, *_ = np.linalg.lstsq(B / scale, y, rcond=None)
    coef = coef / scale
    return SplineFit(K, (float(x[0]), float(x[-1])), coef, knots)


def max_knots(J: int) -> int:
    """Largest admissible interior knot count for orbits ``0..J``."""
    return max(J - 1, 0)


def _orbit_x(J):
    return np.arange(J + 1, dtype=float)


def select_knots_cv(ensemble: TrajectoryEnsemble, candidate_K: Sequence[int]) -> int:
    """Knot count whose perturbed-trajectory fits best predict the observed one.

    For each ``K`` a spline is fitted to every perturbed trajectory's
    estimates and its per-orbit predictions are compared to the observed
    estimates by squared error; the ``K`` with the smallest mean error over
    orbits and replicates wins, ties going to the larger ``K``.
    """
    candidate_K = sorted({int(k) for k in candidate_K})
    if not candidate_K:
        raise ValueError("candidate_K must be non-empty")
    J = ensemble.J
    x = _orbit_x(J)
    target = ensemble.observed.estimates
    Y = np.column_stack([t.estimates for t in ensemble.perturbed])
    best_k, best_err = None, math.inf
    for K in candidate_K:
        if K < 0 or K + 2 > J + 1:
            raise TooManyKnots(f"{K} interior knots not admissible for {J + 1} orbits")
        B = natural_spline_basis(x, knot_vector(0.0, float(J), K))
        B = B / np.abs(B).max(axis=0)
        coef, *_ = np.linalg.lstsq(B, Y, rcond=None)
        err = float(np.mean((B @ coef - target[:, None]) ** 2))
        if best_k is None or err <= best_err * (1 + 1e-12) + 1e-300:
            best_k, best_err = K, min(err, best_err)
    return best_k


def percentile_rank(p: float, m: int) -> int:
    """1-based nearest rank ``ceil(p m)``, at least 1."""
    return min(m, max(1, math.ceil(round(p * m, 9))))


def nearest_rank(values, p: float) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    return float(v[percentile_rank(p, v.size) - 1])


def trim_count(trim: float, m: int) -> int:
    return math.floor(round(trim * m, 9))


def uncertainty_interval(lower, upper, trim: float = DEFAULT_TRIM, alpha: float = 0.05):
    """Combine per-trajectory interval endpoints into one interval.

    The ``floor(trim m)`` lowest lower endpoints and highest upper endpoints
    are discarded, then the nearest-rank ``alpha/2`` percentile of the lower
    endpoints and ``1 - alpha/2`` percentile of the upper endpoints are taken.
    """
    if not 0 <= trim < 0.5:
        raise ValueError("trim must lie in [0, 0.5)")
    lo = np.sort(np.asarray(lower, dtype=float))
    hi = np.sort(np.asarray(upper, dtype=float))
    k = trim_count(trim, lo.size)
    lo = lo[k:]
    hi = hi[: hi.size - k]
    return nearest_rank(lo, alpha / 2), nearest_rank(hi, 1 - alpha / 2)


@dataclass(frozen=True, eq=False)
class TrajectorySplines:
    estimate: SplineFit
    lower: SplineFit
    upper: SplineFit


@dataclass(frozen=True, eq=False)
class ExtrapolationResult:
    """Extrapolated effects and intervals; row 0 of each array is the observed trajectory."""

    q_values: tuple[int, ...]
    interior_knots: int
    J: int
    predicted_effects: np.ndarray  # (m, len(q))
    predicted_lower: np.ndarray
    predicted_upper: np.ndarray
    uncertainty_lower: np.ndarray  # (len(q),)
    uncertainty_upper: np.ndarray
    effect_lower: np.ndarray  # percentiles of predicted effects
    effect_upper: np.ndarray
    baseline_excludes_zero: bool
    crossing_q: int | None
    splines: tuple[TrajectorySplines, ...] = field(repr=False)
    trim: float = DEFAULT_TRIM
    alpha: float = 0.05

    @property
    def uncertainty_intervals(self) -> list[tuple[float, float]]:
        return list(zip(self.uncertainty_lower.tolist(), self.uncertainty_upper.tolist()))

    def excludes_zero(self) -> np.ndarray:
        return (self.uncertainty_lower > 0) | (self.uncertainty_upper < 0)

    def covers(self, value: float) -> np.ndarray:
        return (self.uncertainty_lower <= value) & (value <= self.uncertainty_upper)


def default_q_values(J: int) -> list[int]:
    return list(range(1, max(1, math.ceil(J / 2)) + 1))


def extrapolate_ensemble(ensemble: TrajectoryEnsemble, K: int, q_values: Sequence[int] | None = None,
                         trim: float = DEFAULT_TRIM, alpha: float = 0.05) -> ExtrapolationResult:
    """Fit estimate and CI-endpoint splines to every trajectory and extrapolate.

    The observed trajectory joins the perturbed ones in the endpoint pool.
    ``crossing_q`` is the smallest probed ``q`` at which the uncertainty
    interval's inclusion of zero differs from that of the observed
    full-adjustment CI.
    """
    J = ensemble.J
    q_values = default_q_values(J) if q_values is None else [int(q) for q in q_values]
    if not q_values or any(q < 1 for q in q_values):
        raise ValueError("q_values must be positive integers")
    q_values = sorted(set(q_values))
    if not 0 <= trim < 0.5:
        raise ValueError("trim must lie in [0, 0.5)")
    x = _orbit_x(J)
    xq = J + np.asarray(q_values, dtype=float)
    trajs = ensemble.trajectories
    splines = []
    est = np.empty((len(trajs), len(q_values)))
    lo = np.empty_like(est)
    hi = np.empty_like(est)
    for i, t in enumerate(trajs):
        s = TrajectorySplines(fit_natural_spline(x, t.estimates, K),
                              fit_natural_spline(x, t.ci_lower, K),
                              fit_natural_spline(x, t.ci_upper, K))
        splines.append(s)
        est[i] = s.estimate(xq)
        a, b = s.lower(xq), s.upper(xq)
        # separately extrapolated endpoints may cross
        lo[i] = np.minimum(a, b)
        hi[i] = np.maximum(a, b)
    ui = [uncertainty_interval(lo[:, c], hi[:, c], trim, alpha) for c in range(len(q_values))]
    ui_lo = np.array([u[0] for u in ui])
    ui_hi = np.array([u[1] for u in ui])
    eff_lo = np.array([nearest_rank(est[:, c], alpha / 2) for c in range(len(q_values))])
    eff_hi = np.array([nearest_rank(est[:, c], 1 - alpha / 2) for c in range(len(q_values))])

    top = ensemble.observed.orbits[-1]
    baseline = bool(top.ci_lower > 0 or top.ci_upper < 0)
    excl = (ui_lo > 0) | (ui_hi < 0)
    crossing = next((q for q, e in zip(q_values, excl) if bool(e) != baseline), None)
    return ExtrapolationResult(tuple(q_values), int(K), J, est, lo, hi, ui_lo, ui_hi,
                               eff_lo, eff_hi, baseline, crossing, tuple(splines), trim, alpha)
