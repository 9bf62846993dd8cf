"""Ensembles of perturbed elimination trajectories."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .data import Dataset
from .elimination import Trajectory, build_trajectory
from .errors import ModelFitFailed
from .estimator import EffectEvaluator

DEFAULT_B = 500
_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def replicate_seed(master_seed: int, index: int) -> int:
    """Seed for replicate ``index``; index 0 is the observed trajectory.

    Distinct indices give distinct seeds because the mix is a bijection.
    """
    return splitmix64((master_seed + index * 0x9E3779B97F4A7C15) & _MASK64)


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    observed: Trajectory
    perturbed: tuple[Trajectory, ...]
    master_seed: int

    @property
    def B(self) -> int:
        return len(self.perturbed)

    @property
    def J(self) -> int:
        return self.observed.J

    @property
    def trajectories(self) -> tuple[Trajectory, ...]:
        """Observed trajectory first, then the perturbed ones."""
        return (self.observed,) + self.perturbed


def build_replicate(data: Dataset, master_seed: int, index: int, alpha: float = 0.05,
                    evaluator: EffectEvaluator | None = None) -> Trajectory:
    """Perturbed trajectory number ``index`` (1-based) of an ensemble."""
    try:
        return build_trajectory(data, "perturbed", replicate_seed(master_seed, index), alpha,
                                evaluator)
    except ModelFitFailed as exc:
        exc.args = (f"replicate {index}: {exc}",)
        raise


def _replicate_batch(data, master_seed, indices, alpha, covariance_scale):
    ev = EffectEvaluator(data, covariance_scale)
    return [build_replicate(data, master_seed, b, alpha, ev) for b in indices]


def build_ensemble(data: Dataset, B: int = DEFAULT_B, master_seed: int = 0, alpha: float = 0.05,
                   *, covariance_scale: float = 1.0, workers: int = 1,
                   evaluator: EffectEvaluator | None = None) -> TrajectoryEnsemble:
    """Observed (MLE) trajectory plus ``B`` perturbed trajectories.

    Replicate seeds depend only on ``master_seed`` and the replicate index,
    so the result does not depend on ``workers`` or execution order.
    ``covariance_scale`` scales the coefficient draws (0 reproduces the MLE).
    """
    if B < 1:
        raise ValueError("B must be at least 1")
    if master_seed < 0:
        raise ValueError("master_seed must be non-negative")
    ev = evaluator if evaluator is not None else EffectEvaluator(data, covariance_scale)
    observed = build_trajectory(data, "mle", replicate_seed(master_seed, 0), alpha, ev)
    indices = list(range(1, B + 1))
    if workers <= 1:
        perturbed = [build_replicate(data, master_seed, b, alpha, ev) for b in indices]
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        by_index = {}
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_replicate_batch, data, master_seed, c, alpha, covariance_scale)
                       for c in chunks if c]
            for c, fut in zip([c for c in chunks if c], futures):
                by_index.update(zip(c, fut.result()))
        perturbed = [by_index[b] for b in indices]
    return TrajectoryEnsemble(observed, tuple(perturbed), master_seed)
