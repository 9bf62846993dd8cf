"""Simulation studies: populations, unmeasured-confounder designation, metrics.

Study one draws a binary exposure and binary outcome from logistic models
sharing coefficients ``alpha_k = beta_k ~ U(-1, 1)``. Study two uses a probit
(or logit) exposure with ``alpha_k ~ U(-0.25, 0.25)`` and a Gaussian outcome
with ``beta_k ~ U(-4, 4)`` and variance ``p + q``. Potential outcomes share
their noise so the population effect is computed exactly from ``Y1 - Y0``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, ndtr

from .data import Dataset
from .elimination import build_trajectory
from .errors import NumericError, StudyAborted
from .estimator import EffectEvaluator, dr_effect
from .extrapolation import extrapolate_ensemble, max_knots
from .perturbation import build_ensemble, replicate_seed

log = logging.getLogger(__name__)

METHODS = ("All", "Measured", "Predicted")
FAILURE_BUDGET = 0.05


@dataclass(frozen=True)
class Scenario:
    study: int = 1
    p: int = 12
    q: int = 0
    delta: float = 0.0
    exposure_link: str = "logit"
    N: int = 50_000
    n: int = 1000
    replicates: int = 1000
    B: int = 100
    seed: int = 0
    alpha: float = 0.05
    trim: float = 0.0

    def __post_init__(self):
        if self.study not in (1, 2):
            raise ValueError(f"unknown study {self.study!r}")
        if self.p < 1 or self.q < 0:
            raise ValueError("need p >= 1 and q >= 0")
        if self.N < self.n:
            raise ValueError("population size N must be at least the sample size n")
        if self.exposure_link not in ("logit", "probit"):
            raise ValueError(f"unknown link {self.exposure_link!r}")
        if self.study == 1 and self.exposure_link != "logit":
            raise ValueError("study one uses a logit exposure model")
        if self.replicates < 1 or self.B < 1:
            raise ValueError("replicates and B must be positive")

    @property
    def horizon(self) -> int:
        """Extrapolation target: ``q``, or 2 when nothing is unmeasured."""
        return self.q if self.q > 0 else 2


@dataclass(frozen=True, eq=False)
class Population:
    data: Dataset
    y0: np.ndarray
    y1: np.ndarray
    exposure_coefficients: np.ndarray
    outcome_coefficients: np.ndarray

    @property
    def true_psi(self) -> float:
        return float(np.mean(self.y1 - self.y0))


def draw_coefficients(scenario: Scenario, rng: np.random.Generator):
    k = scenario.p + scenario.q
    if scenario.study == 1:
        a = rng.uniform(-1, 1, k)
        return a, a.copy()
    return rng.uniform(-0.25, 0.25, k), rng.uniform(-4, 4, k)


def generate_population(scenario: Scenario, rng: np.random.Generator,
                        coefficients=None) -> Population:
    """Population of size ``N`` with ``p + q`` standard normal confounders.

    ``coefficients`` optionally overrides the drawn ``(alpha, beta)`` pair
    (intercepts are zero).
    """
    k = scenario.p + scenario.q
    a_coef, b_coef = draw_coefficients(scenario, rng) if coefficients is None else \
        (np.asarray(coefficients[0], float), np.asarray(coefficients[1], float))
    N = scenario.N
    L = rng.standard_normal((N, k))
    lin_a = L @ a_coef
    pa = ndtr(lin_a) if scenario.exposure_link == "probit" else expit(lin_a)
    A = (rng.random(N) < pa).astype(float)
    lin_y = L @ b_coef
    if scenario.study == 1:
        u = rng.random(N)
        y0 = (u < expit(lin_y)).astype(float)
        y1 = (u < expit(lin_y + scenario.delta)).astype(float)
        kind = "binary"
    else:
        eps = rng.standard_normal(N) * math.sqrt(k)
        y0 = lin_y + eps
        y1 = y0 + scenario.delta
        kind = "continuous"
    y = np.where(A == 1, y1, y0)
    names = tuple(f"L{i + 1}" for i in range(k))
    return Population(Dataset(A, y, L, names, kind), y0, y1, a_coef, b_coef)


def designate_unmeasured(population: Dataset, q: int, seed: int = 0) -> list[str]:
    """First ``q`` covariates removed by MLE-mode elimination on the population."""
    if q < 0 or q > population.J:
        raise ValueError(f"q must lie in [0, {population.J}]")
    if q == 0:
        return []
    traj = build_trajectory(population, "mle", seed)
    return list(traj.elimination_order[:q])


def generate_rct(n: int, J: int, effect: float = 0.10, seed: int = 0,
                 base_risk: float = 0.35) -> Dataset:
    """Randomized trial with a binary outcome and known risk difference.

    Exposure is a fair coin. Risk is linear in exposure and in centred
    prognostic covariates (alternately binary and uniform), so the marginal
    risk difference equals ``effect`` exactly.
    """
    rng = np.random.default_rng(seed)
    L = np.empty((n, J))
    L[:, 0::2] = rng.random((n, (J + 1) // 2)) < 0.5
    L[:, 1::2] = rng.random((n, J // 2))
    budget = min(base_risk, 1 - base_risk - effect) - 0.02
    gamma = rng.uniform(-1, 1, J) * budget / J * 2
    risk = base_risk + gamma @ (L - 0.5).T
    A = (rng.random(n) < 0.5).astype(float)
    Y = (rng.random(n) < risk + effect * A).astype(float)
    return Dataset(A, Y, L, tuple(f"X{i + 1}" for i in range(J)), "binary")


@dataclass(frozen=True)
class MethodSummary:
    mean: float
    sd: float
    bias: float
    variance: float
    rmse: float
    coverage: float
    mcse: float
    count: int


def summarize(estimates, covered, truth: float) -> MethodSummary:
    est = np.asarray(estimates, dtype=float)
    m = est.size
    mean = float(est.mean())
    var = float(est.var(ddof=1)) if m > 1 else 0.0
    bias = mean - truth
    return MethodSummary(mean, math.sqrt(var), bias, var, math.sqrt(bias * bias + var),
                         float(np.mean(covered)), math.sqrt(var / m), m)


@dataclass(frozen=True, eq=False)
class SimReport:
    scenario: Scenario
    true_psi: float
    unmeasured_names: tuple[str, ...]
    methods: dict
    replicates: list = field(repr=False)
    failures: int = 0

    def __getitem__(self, method) -> MethodSummary:
        return self.methods[method]

    def table_row(self) -> dict:
        """Flat summary row: estimates, root MSE and coverage per method."""
        s = self.scenario
        row = {"study": s.study, "link": s.exposure_link, "q": s.q, "psi": self.true_psi,
               "p": s.p, "delta": s.delta}
        for stat in ("mean", "sd", "rmse", "coverage", "bias", "variance", "mcse"):
            for m in METHODS:
                row[f"{m}_{stat}"] = getattr(self.methods[m], stat)
        row["replicates"] = self.methods["All"].count
        row["failures"] = self.failures
        row["unmeasured"] = " ".join(self.unmeasured_names)
        return row


def _covers(lo, hi, v):
    return bool(lo <= v <= hi)


def sample_rows(N: int, n: int, seed: int, index: int) -> np.ndarray:
    """Sorted row indices of replicate ``index``, drawn without replacement."""
    rng = np.random.default_rng([seed, 1, index])
    return np.sort(rng.choice(N, size=n, replace=False))


def run_replicate(population: Dataset, measured: list[str], scenario: Scenario, index: int,
                  truth: float) -> dict:
    """One sampled dataset: All, Measured and Predicted estimates and coverage."""
    s = scenario
    sample = population.take(sample_rows(population.n, s.n, s.seed, index))
    full = dr_effect(sample, sample.names, alpha=s.alpha)
    sub = sample.select(measured)
    ev = EffectEvaluator(sub)
    meas = ev.estimate(tuple(range(sub.J)), s.alpha)
    ens = build_ensemble(sub, s.B, replicate_seed(s.seed, index + 1), s.alpha, evaluator=ev)
    ext = extrapolate_ensemble(ens, max_knots(sub.J), [s.horizon], s.trim, s.alpha)
    return {
        "replicate": index,
        "All": full.estimate, "All_covered": _covers(full.ci_lower, full.ci_upper, truth),
        "Measured": meas.estimate,
        "Measured_covered": _covers(meas.ci_lower, meas.ci_upper, truth),
        "Predicted": float(ext.predicted_effects[0, 0]),
        "Predicted_covered": _covers(ext.uncertainty_lower[0], ext.uncertainty_upper[0], truth),
        "Predicted_lower": float(ext.uncertainty_lower[0]),
        "Predicted_upper": float(ext.uncertainty_upper[0]),
    }


def _run_batch(population, measured, scenario, indices, truth):
    out = []
    for r in indices:
        try:
            out.append(run_replicate(population, measured, scenario, r, truth))
        except (NumericError, np.linalg.LinAlgError) as exc:
            log.warning("replicate %d failed: %s", r, exc)
            out.append({"replicate": r, "error": str(exc)})
    return out


def run_study(scenario: Scenario, workers: int = 1) -> SimReport:
    """Run all replicates of a scenario and aggregate the metrics.

    Raises StudyAborted when more than 5% of replicates fail.
    """
    s = scenario
    pop = generate_population(s, np.random.default_rng([s.seed, 0]))
    truth = pop.true_psi
    unmeasured = designate_unmeasured(pop.data, s.q, seed=s.seed)
    measured = [c for c in pop.data.names if c not in unmeasured]
    log.info("study %d: true psi %.4f, unmeasured %s", s.study, truth, unmeasured)

    indices = list(range(s.replicates))
    if workers <= 1:
        results = _run_batch(pop.data, measured, s, indices, truth)
    else:
        chunks = [c for c in (indices[i::workers] for i in range(workers)) if c]
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_run_batch, pop.data, measured, s, c, truth) for c in chunks]
            results = [r for f in futures for r in f.result()]
        results.sort(key=lambda r: r["replicate"])

    ok = [r for r in results if "error" not in r]
    failures = len(results) - len(ok)
    if failures > FAILURE_BUDGET * len(results):
        raise StudyAborted(f"{failures} of {len(results)} replicates failed")
    if not ok:
        raise StudyAborted("no replicate succeeded")
    methods = {m: summarize([r[m] for r in ok], [r[f"{m}_covered"] for r in ok], truth)
               for m in METHODS}
    return SimReport(s, truth, tuple(unmeasured), methods, results, failures)


def scenario_dict(s: Scenario) -> dict:
    return asdict(s)
