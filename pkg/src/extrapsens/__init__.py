"""Sensitivity analysis for unmeasured confounding by effect extrapolation.

Covariates are eliminated one at a time by the smallest debiased change in a
doubly robust marginal effect estimate; the resulting trajectories, and
perturbed copies of them, are extrapolated with natural cubic splines to
hypothetical additional confounders.
"""

__version__ = "0.1.0"

from .data import ColumnSpec, Dataset, load_csv, write_table
from .elimination import Trajectory, build_trajectory
from .estimator import (
    EffectEvaluator,
    OrbitEstimate,
    debiased_gap,
    dr_effect,
    exposure_weights,
    variance_of_difference,
)
from .extrapolation import (
    ExtrapolationResult,
    SplineFit,
    extrapolate_ensemble,
    fit_natural_spline,
    select_knots_cv,
)
from .glm import ModelFit, fit_glm, predict_mean, sample_coefficients
from .perturbation import TrajectoryEnsemble, build_ensemble

__all__ = [
    "ColumnSpec", "Dataset", "load_csv", "write_table",
    "ModelFit", "fit_glm", "predict_mean", "sample_coefficients",
    "OrbitEstimate", "EffectEvaluator", "dr_effect", "exposure_weights",
    "variance_of_difference", "debiased_gap",
    "Trajectory", "build_trajectory", "TrajectoryEnsemble", "build_ensemble",
    "SplineFit", "ExtrapolationResult", "fit_natural_spline", "select_knots_cv",
    "extrapolate_ensemble",
]
