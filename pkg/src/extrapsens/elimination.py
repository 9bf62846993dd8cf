"""Backward elimination of covariates by smallest debiased change in effect.

Starting from the full covariate set, each step drops the covariate whose
removal changes the doubly robust estimate least, as measured by
``debiased_gap``. Ties (typically several gaps clamped to zero) are broken
uniformly at random. The result is a nested sequence of subsets with one
orbit estimate per subset size.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ModelFitFailed
from .estimator import EffectEvaluator, OrbitEstimate, debiased_gap, variance_of_difference

log = logging.getLogger(__name__)

MODES = ("mle", "perturbed")
TIE_TOL = 1e-12

# leading words of the per-stream seed tuples
_TIE_STREAM = 0
_DRAW_STREAM = 1


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Orbit estimates indexed by the number of covariates adjusted for.

    ``orbits[j]`` adjusts for ``j`` covariates; ``elimination_order[0]`` was
    removed first (from the full set) and is the weakest.
    """

    orbits: tuple[OrbitEstimate, ...]
    elimination_order: tuple[str, ...]
    perturbed: bool
    seed: int
    evaluations: int = 0

    @property
    def J(self) -> int:
        return len(self.orbits) - 1

    @property
    def estimates(self) -> np.ndarray:
        return np.array([o.estimate for o in self.orbits])

    @property
    def ci_lower(self) -> np.ndarray:
        return np.array([o.ci_lower for o in self.orbits])

    @property
    def ci_upper(self) -> np.ndarray:
        return np.array([o.ci_upper for o in self.orbits])

    @property
    def variances(self) -> np.ndarray:
        return np.array([o.variance for o in self.orbits])

    def added_at(self, j: int) -> str | None:
        """Covariate present at orbit ``j`` but not at ``j - 1``."""
        if j == 0:
            return None
        return self.elimination_order[self.J - j]


def _draw_rng(seed: int, orbit: int, column: int) -> np.random.Generator:
    return np.random.default_rng([seed, _DRAW_STREAM, orbit, column])


def build_trajectory(data: Dataset, mode: str = "mle", seed: int = 0, alpha: float = 0.05,
                     evaluator: EffectEvaluator | None = None) -> Trajectory:
    """Construct one elimination trajectory.

    In ``perturbed`` mode every candidate estimate (and the full-set
    reference) uses its own draw of the outcome coefficients, from a stream
    keyed by ``(seed, orbit, column)``. Candidates whose models cannot be
    fitted get an infinite gap and a warning.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ev = evaluator if evaluator is not None else EffectEvaluator(data)
    perturbed = mode == "perturbed"
    J = data.J
    names = data.names

    def evaluate(cols, orbit, column):
        if perturbed:
            return ev.perturbed(cols, _draw_rng(seed, orbit, column), alpha)
        return ev.estimate(cols, alpha)

    remaining = list(range(J))
    try:
        current = evaluate(remaining, J + 1, J)
    except ModelFitFailed as exc:
        exc.orbit = J
        raise
    orbits: list[OrbitEstimate | None] = [None] * (J + 1)
    orbits[J] = current
    order: list[str] = []
    tie_rng = np.random.default_rng([seed, _TIE_STREAM])
    evaluations = 0

    for j in range(J, 0, -1):
        gaps = np.empty(len(remaining))
        candidates: list[OrbitEstimate | None] = []
        for i, c in enumerate(remaining):
            cols = remaining[:i] + remaining[i + 1:]
            evaluations += 1
            try:
                est = evaluate(cols, j, c)
            except ModelFitFailed as exc:
                log.warning("orbit %d: dropping candidate %r is unfittable (%s); gap set to inf",
                            j, names[c], exc.cause)
                gaps[i] = math.inf
                candidates.append(None)
                continue
            vd = variance_of_difference(est.influence, current.influence)
            gaps[i] = debiased_gap(est.estimate, current.estimate, vd)
            candidates.append(est)
        if not np.isfinite(gaps).any():
            raise ModelFitFailed("exposure/outcome", [names[c] for c in remaining],
                                 "no candidate subset could be fitted", orbit=j,
                                 candidate=None)
        tied = np.flatnonzero(gaps <= gaps.min() + TIE_TOL)
        pick = int(tied[0]) if tied.size == 1 else int(tied[tie_rng.integers(tied.size)])
        order.append(names[remaining[pick]])
        current = candidates[pick]
        orbits[j - 1] = current
        del remaining[pick]

    return Trajectory(tuple(orbits), tuple(order), perturbed, seed, evaluations)
