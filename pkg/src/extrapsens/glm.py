"""Generalized linear models fitted by iteratively reweighted least squares.

Three families are supported: ``bernoulli_logit``, ``bernoulli_probit`` and
``gaussian_identity``. The design matrix is expected to carry the intercept
as its first column.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg
from scipy.linalg import lapack
from scipy.special import erfc, expit, log_ndtr, logit, ndtri

from .errors import (
    CovarianceNotPSD,
    DimensionMismatch,
    NonConvergence,
    RankDeficient,
    SeparationDetected,
)

FAMILIES = ("bernoulli_logit", "bernoulli_probit", "gaussian_identity")

DEVIANCE_TOL = 1e-10
SCORE_TOL = 1e-6
MAX_ITER = 100
SEPARATION_BOUND = 30.0
RIDGES = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)
_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


class _Logit:
    bernoulli = True

    @staticmethod
    def link(mu):
        return logit(mu)

    @staticmethod
    def mean(eta):
        return expit(eta)

    @staticmethod
    def loglik(y, eta):
        # y*log(mu) + (1-y)*log(1-mu), stable in eta
        return y * eta - np.logaddexp(0.0, eta)

    @staticmethod
    def score_factor(y, eta, mu):
        return y - mu

    @staticmethod
    def fisher_weight(y, eta, mu):
        return mu * (1.0 - mu)

    observed_weight = fisher_weight


class _Probit:
    bernoulli = True

    @staticmethod
    def link(mu):
        return ndtri(mu)

    @staticmethod
    def mean(eta):
        return 0.5 * erfc(-eta / np.sqrt(2.0))

    @staticmethod
    def loglik(y, eta):
        return y * log_ndtr(eta) + (1 - y) * log_ndtr(-eta)

    @staticmethod
    def _ratios(eta):
        # phi/Phi and phi/(1-Phi), computed on the log scale
        log_phi = -0.5 * eta * eta - _LOG_SQRT_2PI
        return np.exp(log_phi - log_ndtr(eta)), np.exp(log_phi - log_ndtr(-eta))

    @classmethod
    def score_factor(cls, y, eta, mu):
        lam, kap = cls._ratios(eta)
        return y * lam - (1 - y) * kap

    @staticmethod
    def fisher_weight(y, eta, mu):
        # phi^2 / (Phi (1 - Phi))
        log_phi = -0.5 * eta * eta - _LOG_SQRT_2PI
        return np.exp(2 * log_phi - log_ndtr(eta) - log_ndtr(-eta))

    @classmethod
    def observed_weight(cls, y, eta, mu):
        # minus the second derivative of the log-likelihood in eta
        lam, kap = cls._ratios(eta)
        return y * lam * (eta + lam) + (1 - y) * kap * (kap - eta)


class _Gaussian:
    bernoulli = False

    @staticmethod
    def link(mu):
        return mu

    @staticmethod
    def mean(eta):
        return eta

    @staticmethod
    def loglik(y, eta):
        return -0.5 * (y - eta) ** 2

    @staticmethod
    def score_factor(y, eta, mu):
        return y - mu

    @staticmethod
    def fisher_weight(y, eta, mu):
        return np.ones_like(eta)

    observed_weight = fisher_weight


_FAMILY_IMPL = {
    "bernoulli_logit": _Logit,
    "bernoulli_probit": _Probit,
    "gaussian_identity": _Gaussian,
}


def _family(name):
    try:
        return _FAMILY_IMPL[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; expected one of {FAMILIES}") from None


@dataclass(frozen=True, eq=False)
class ModelFit:
    coefficients: np.ndarray
    covariance: np.ndarray
    family: str
    converged: bool
    iterations: int
    deviance: float

    @property
    def p(self) -> int:
        return self.coefficients.shape[0]

    @cached_property
    def covariance_factor(self) -> np.ndarray:
        """Lower Cholesky factor of the covariance, with ridge repair."""
        return psd_factor(self.covariance)


def psd_factor(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``cov``; escalates a diagonal ridge up to 1e-8.

    An all-zero matrix has the zero factor.
    """
    cov = np.asarray(cov, dtype=float)
    if not np.any(cov):
        return np.zeros_like(cov)
    eye = np.eye(cov.shape[0])
    for ridge in RIDGES:
        try:
            return np.linalg.cholesky(cov + ridge * eye)
        except np.linalg.LinAlgError:
            continue
    raise CovarianceNotPSD("covariance is not positive semi-definite even after ridge 1e-8")


def _check_rank(xtwx):
    d = np.sqrt(np.diag(xtwx))
    if np.any(d == 0):
        raise RankDeficient("design has a zero column")
    scaled = xtwx / np.outer(d, d)
    _, _, rank, info = lapack.dpstrf(scaled, lower=1, tol=1e-12)
    if info < 0 or rank < xtwx.shape[0]:
        raise RankDeficient(f"design has rank {rank} < {xtwx.shape[0]}")


def _solve_spd(a, b):
    try:
        c = linalg.cho_factor(a, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise RankDeficient("weighted cross-product is not positive definite") from None
    return linalg.cho_solve(c, b, check_finite=False)


def fit_glm(design, response, family: str = "bernoulli_logit", prior_weights=None,
            *, max_iter: int = MAX_ITER, tol: float = DEVIANCE_TOL) -> ModelFit:
    """Maximum (weighted) likelihood fit of a GLM by IRLS.

    Iterates Fisher scoring steps until the relative change in deviance drops
    below ``tol`` and the largest score component is below 1e-6. The returned
    covariance is the inverse of the weighted observed information; for the
    Gaussian family it is scaled by the residual variance estimate
    ``RSS_w / (n - p)``.

    Raises
    ------
    SeparationDetected
        A Bernoulli coefficient exceeded 30 in absolute value.
    NonConvergence
        The iteration cap was hit with the score above tolerance.
    RankDeficient
        ``n <= p`` or the weighted design is not of full column rank.
    """
    fam = _family(family)
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch("design rows must match response length")
    n, p = X.shape
    if n <= p:
        raise RankDeficient(f"need n > p, got n={n}, p={p}")
    if prior_weights is None:
        pw = np.ones(n)
    else:
        pw = np.asarray(prior_weights, dtype=float).ravel()
        if pw.shape[0] != n:
            raise DimensionMismatch("prior_weights length must match response")
        if np.any(~(pw > 0)) or not np.all(np.isfinite(pw)):
            raise ValueError("prior_weights must be strictly positive and finite")

    _check_rank((X.T * pw) @ X)

    ybar = float(pw @ y / pw.sum())
    beta = np.zeros(p)
    if fam.bernoulli:
        beta[0] = fam.link((ybar * n + 0.5) / (n + 1))
    else:
        beta[0] = ybar

    eta = X @ beta
    dev = -2.0 * float(pw @ fam.loglik(y, eta))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = fam.mean(eta)
        w = pw * fam.fisher_weight(y, eta, mu)
        score = X.T @ (pw * fam.score_factor(y, eta, mu))
        step = _solve_spd((X.T * w) @ X, score)
        new_beta = beta + step
        new_eta = X @ new_beta
        new_dev = -2.0 * float(pw @ fam.loglik(y, new_eta))
        halvings = 0
        while not np.isfinite(new_dev) or new_dev > dev + 1e-8 * (abs(dev) + 0.1):
            if halvings == 20:
                break
            step *= 0.5
            halvings += 1
            new_beta = beta + step
            new_eta = X @ new_beta
            new_dev = -2.0 * float(pw @ fam.loglik(y, new_eta))
        beta, eta = new_beta, new_eta
        if fam.bernoulli and np.max(np.abs(beta)) > SEPARATION_BOUND:
            raise SeparationDetected(
                f"|coefficient| exceeded {SEPARATION_BOUND:g} at iteration {it}; "
                "the response is (quasi-)separated by the design"
            )
        rel = abs(new_dev - dev) / (abs(new_dev) + 0.1)
        dev = new_dev
        if rel < tol:
            mu = fam.mean(eta)
            score = X.T @ (pw * fam.score_factor(y, eta, mu))
            if np.max(np.abs(score)) < SCORE_TOL:
                converged = True
                break

    mu = fam.mean(eta)
    if not converged:
        score = X.T @ (pw * fam.score_factor(y, eta, mu))
        if np.max(np.abs(score)) >= SCORE_TOL:
            raise NonConvergence(
                f"IRLS did not converge in {max_iter} iterations "
                f"(max |score| = {np.max(np.abs(score)):.3g})"
            )
        converged = True

    info = (X.T * (pw * fam.observed_weight(y, eta, mu))) @ X
    cov = _solve_spd(info, np.eye(p))
    if family == "gaussian_identity":
        dev = float(pw @ (y - mu) ** 2)
        cov = cov * (dev / (n - p))
    cov = 0.5 * (cov + cov.T)
    beta.setflags(write=False)
    cov.setflags(write=False)
    return ModelFit(beta, cov, family, converged, it, dev)


def predict_mean(fit: ModelFit, design_rows) -> np.ndarray:
    """Inverse link applied to ``design_rows @ coefficients``."""
    X = np.atleast_2d(np.asarray(design_rows, dtype=float))
    if X.shape[1] != fit.p:
        raise DimensionMismatch(f"expected {fit.p} columns, got {X.shape[1]}")
    return _family(fit.family).mean(X @ fit.coefficients)


def inverse_link(family: str, eta) -> np.ndarray:
    return _family(family).mean(np.asarray(eta, dtype=float))


def sample_coefficients(fit: ModelFit, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """One draw from N(coefficients, scale * covariance).

    Uses the Cholesky factor of the covariance times a standard normal
    vector, so the result is a deterministic function of the generator state.
    """
    z = rng.standard_normal(fit.p)
    return fit.coefficients + np.sqrt(scale) * (fit.covariance_factor @ z)
