"""Figures for analysis and simulation reports.

SVG output is made byte-reproducible by fixing the hash salt used for
element ids and dropping the creation date from the metadata.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib.figure import Figure

from .extrapolation import ExtrapolationResult
from .perturbation import TrajectoryEnsemble

STYLE = {
    "svg.hashsalt": "extrapsens",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig: Figure, path) -> None:
    with matplotlib.rc_context(STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})


def plot_trajectory(ensemble: TrajectoryEnsemble, result: ExtrapolationResult, path,
                    max_perturbed_curves: int = 200) -> None:
    """Orbit estimates with CI endpoints, spline fits and extrapolations.

    Empty circles are the observed estimates, empty triangles the CI
    endpoints (inverted for the lower one). Thin grey curves are the splines
    of perturbed trajectories. Filled markers at ``J + q`` are the observed
    extrapolation and the uncertainty interval endpoints; vertical lines span
    the percentiles of the predicted effects across the ensemble.
    """
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(7.0, 4.2))
        ax = fig.add_subplot()
        J = ensemble.J
        q = np.asarray(result.q_values)
        x = np.arange(J + 1)
        grid = np.linspace(0, J + q.max(), 200)

        for s in result.splines[1: max_perturbed_curves + 1]:
            ax.plot(grid, s.estimate(grid), color="0.8", lw=0.4, zorder=1)
        obs = ensemble.observed
        s0 = result.splines[0]
        ax.plot(grid, s0.estimate(grid), color="black", lw=1.2, zorder=3)
        ax.plot(x, obs.estimates, "o", mfc="white", mec="black", ms=5, zorder=4,
                label="estimate")
        ax.plot(x, obs.ci_upper, "^", mfc="white", mec="black", ms=4, zorder=4,
                label="upper CI")
        ax.plot(x, obs.ci_lower, "v", mfc="white", mec="black", ms=4, zorder=4,
                label="lower CI")

        xq = J + q
        ax.vlines(xq, result.effect_lower, result.effect_upper, color="tab:blue", lw=1.0,
                  zorder=2, label="predicted effect percentiles")
        ax.plot(xq, result.predicted_effects[0], "o", color="black", ms=5, zorder=5)
        ax.plot(xq, result.uncertainty_upper, "^", color="tab:red", ms=5, zorder=5,
                label="uncertainty interval")
        ax.plot(xq, result.uncertainty_lower, "v", color="tab:red", ms=5, zorder=5)
        ax.axhline(0.0, color="0.5", lw=0.6, ls="--", zorder=0)
        ax.axvline(J, color="0.5", lw=0.6, ls=":", zorder=0)
        ax.set_xlabel("number of covariates adjusted for")
        ax.set_ylabel("marginal exposure effect")
        ax.legend(loc="best", fontsize=7, frameon=False)
        fig.tight_layout()
    _save(fig, path)


def plot_report(rows, path) -> None:
    """Bar chart of coverage per method for one or more simulation rows."""
    methods = ("All", "Measured", "Predicted")
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(5.0, 3.2))
        ax = fig.add_subplot()
        width = 0.8 / len(methods)
        pos = np.arange(len(rows))
        for i, m in enumerate(methods):
            ax.bar(pos + i * width, [r[f"{m}_coverage"] for r in rows], width, label=m)
        ax.axhline(0.95, color="0.3", lw=0.7, ls="--")
        ax.set_xticks(pos + width, [f"q={r['q']}, p={r['p']}" for r in rows])
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("coverage")
        ax.legend(fontsize=7, frameon=False)
        fig.tight_layout()
    _save(fig, path)
