"""Doubly robust standardized estimates of the marginal exposure effect.

For a covariate subset ``S`` the exposure model is a logistic regression of
``A`` on ``[1, L_S]`` and the outcome model regresses ``Y`` on
``[1, A, L_S]`` (logit for binary outcomes, identity for continuous ones)
with inverse probability of exposure weights as prior weights. The effect is

    psi = mean((2A - 1) W (Y - m(A, L)) + m(1, L) - m(0, L))

and the per-individual influence values are the summands minus ``psi``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .errors import GLMError, LengthMismatch, ModelFitFailed
from .glm import ModelFit, fit_glm, inverse_link, sample_coefficients

log = logging.getLogger(__name__)

PROPENSITY_CLIP = 1e-6


@dataclass(frozen=True, eq=False)
class OrbitEstimate:
    subset: tuple[str, ...]
    estimate: float
    influence: np.ndarray
    variance: float
    ci_lower: float
    ci_upper: float
    perturbed: bool = False

    @property
    def se(self) -> float:
        return float(np.sqrt(self.variance))


def exposure_weights(propensity, exposure, eps: float = PROPENSITY_CLIP) -> np.ndarray:
    """Inverse probability of the observed exposure, ``A/p + (1-A)/(1-p)``."""
    p = np.clip(np.asarray(propensity, dtype=float), eps, 1.0 - eps)
    a = np.asarray(exposure, dtype=float)
    return a / p + (1.0 - a) / (1.0 - p)


def variance_of_difference(influence_j, influence_k) -> float:
    """Estimated variance of the difference of two effect estimates.

    ``sum((phi_j - phi_k)^2) / (n (n - 1))``; with ``influence_k = 0`` this is
    the single-estimate variance.
    """
    fj = np.asarray(influence_j, dtype=float)
    fk = np.asarray(influence_k, dtype=float)
    if fj.shape != fk.shape:
        raise LengthMismatch(f"influence vectors differ in length: {fj.shape} vs {fk.shape}")
    n = fj.shape[0]
    d = fj - fk
    return float(d @ d) / (n * (n - 1))


def debiased_gap(estimate_j: float, estimate_k: float, var_diff: float) -> float:
    """Squared change between two estimates minus its estimated variance, floored at 0."""
    return max(0.0, (estimate_j - estimate_k) ** 2 - var_diff)


@lru_cache(maxsize=None)
def z_value(alpha: float) -> float:
    return float(norm.ppf(1.0 - alpha / 2.0))


def outcome_family(data: Dataset) -> str:
    return "bernoulli_logit" if data.outcome_kind == "binary" else "gaussian_identity"


@dataclass(frozen=True, eq=False)
class NuisanceFit:
    """Fitted exposure weights and weighted outcome model for one subset."""

    columns: tuple[int, ...]
    weights: np.ndarray
    exposure_fit: ModelFit
    outcome_fit: ModelFit


class EffectEvaluator:
    """Computes orbit estimates for one dataset, caching nuisance fits.

    Fits depend only on the covariate subset, so perturbed trajectories that
    revisit a subset reuse them. ``covariance_scale`` multiplies the outcome
    coefficient covariance used for perturbation draws; 0 collapses every
    draw onto the MLE.
    """

    def __init__(self, data: Dataset, covariance_scale: float = 1.0):
        self.data = data
        self.covariance_scale = covariance_scale
        self.family = outcome_family(data)
        self.fits = 0
        self._nuisance: dict[tuple[int, ...], NuisanceFit | ModelFitFailed] = {}
        self._mle: dict[tuple[tuple[int, ...], float], OrbitEstimate] = {}
        self._ones = np.ones(data.n)

    def _key(self, subset) -> tuple[int, ...]:
        if all(isinstance(s, (int, np.integer)) for s in subset):
            return tuple(sorted(int(s) for s in subset))
        return tuple(sorted(self.data.column_indices(subset)))

    def nuisance(self, subset) -> NuisanceFit:
        key = self._key(subset)
        hit = self._nuisance.get(key)
        if hit is None:
            hit = self._fit(key)
            self._nuisance[key] = hit
        if isinstance(hit, ModelFitFailed):
            raise hit
        return hit

    def _fit(self, cols):
        d = self.data
        names = tuple(d.names[c] for c in cols)
        L = d.covariates[:, list(cols)]
        self.fits += 1
        try:
            efit = fit_glm(np.column_stack([self._ones, L]), d.exposure, "bernoulli_logit")
        except GLMError as exc:
            return ModelFitFailed("exposure", names, exc)
        w = exposure_weights(expit_rows(efit, L), d.exposure)
        try:
            ofit = fit_glm(np.column_stack([self._ones, d.exposure, L]), d.outcome,
                           self.family, prior_weights=w)
        except GLMError as exc:
            return ModelFitFailed("outcome", names, exc)
        w.setflags(write=False)
        return NuisanceFit(cols, w, efit, ofit)

    def _names(self, cols):
        return tuple(self.data.names[c] for c in cols)

    def _combine(self, nf: NuisanceFit, coefficients, alpha, perturbed, names):
        d = self.data
        a, y = d.exposure, d.outcome
        b = np.asarray(coefficients, dtype=float)
        base = b[0] + d.covariates[:, list(nf.columns)] @ b[2:] if nf.columns else np.full(d.n, b[0])
        m1 = inverse_link(self.family, base + b[1])
        m0 = inverse_link(self.family, base)
        m_obs = np.where(a == 1, m1, m0)
        terms = (2 * a - 1) * nf.weights * (y - m_obs) + m1 - m0
        est = float(terms.mean())
        infl = terms - est
        n = d.n
        var = float(infl @ infl) / (n * (n - 1))
        half = z_value(alpha) * np.sqrt(var)
        infl.setflags(write=False)
        return OrbitEstimate(names, est, infl, var, est - half, est + half, perturbed)

    def estimate(self, subset, alpha: float = 0.05, outcome_coefficients=None) -> OrbitEstimate:
        """MLE-based estimate, or one using the supplied outcome coefficients."""
        key = self._key(subset)
        names = self._names(key)
        nf = self.nuisance(key)
        if outcome_coefficients is not None:
            coef = np.asarray(outcome_coefficients, dtype=float)
            if coef.shape != nf.outcome_fit.coefficients.shape:
                raise LengthMismatch(
                    f"expected {nf.outcome_fit.p} outcome coefficients, got {coef.shape[0]}")
            return self._combine(nf, coef, alpha, True, names)
        cached = self._mle.get((key, alpha))
        if cached is not None:
            return cached
        res = self._combine(nf, nf.outcome_fit.coefficients, alpha, False, names)
        self._mle[(key, alpha)] = res
        return res

    def perturbed(self, subset, rng: np.random.Generator, alpha: float = 0.05) -> OrbitEstimate:
        """Estimate with outcome coefficients drawn from their sampling distribution."""
        nf = self.nuisance(subset)
        coef = sample_coefficients(nf.outcome_fit, rng, self.covariance_scale)
        key = self._key(subset)
        return self._combine(nf, coef, alpha, True, self._names(key))


def expit_rows(fit: ModelFit, L: np.ndarray) -> np.ndarray:
    eta = fit.coefficients[0] + (L @ fit.coefficients[1:] if L.shape[1] else 0.0)
    return inverse_link(fit.family, eta)


def dr_effect(data: Dataset, subset: Sequence[str] = (), outcome_coefficients=None,
              alpha: float = 0.05) -> OrbitEstimate:
    """Doubly robust standardized effect for one covariate subset.

    Parameters
    ----------
    data : Dataset
    subset : sequence of str
        Covariates adjusted for; may be empty (intercept-only models). They
        are used, and reported, in dataset column order.
    outcome_coefficients : array_like, optional
        Replaces the MLE outcome coefficients (order: intercept, exposure,
        subset covariates in column order). Exposure weights always come from
        the MLE fit.
    alpha : float
        Level of the Wald interval.
    """
    return EffectEvaluator(data).estimate(tuple(subset), alpha, outcome_coefficients)
