"""Resampling the exposure from its fitted conditional law given confounders.

Each sampler is a fit function producing a ConditionalModel plus a draw
function consuming it. Fits happen once per analysis; draws are cheap
and never refit anything, so draw b depends only on the model and the
generator handed in.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import glm

STRATEGIES = ("residual-perm", "residual-boot", "parametric-logistic", "binned-perm")


@dataclass
class ConditionalModel:
    """Fitted representation of x given z, ready to draw from.

    kind selects which fields are populated: residual models carry
    fitted_mean + residuals, the logistic model carries success_prob,
    and the binned model additionally carries per-row bin labels.
    """

    kind: str
    fitted_mean: np.ndarray = None
    residuals: np.ndarray = None
    success_prob: np.ndarray = None
    bins: np.ndarray = None

    @property
    def n(self):
        if self.success_prob is not None:
            return self.success_prob.shape[0]
        return self.fitted_mean.shape[0]


def _as_matrix(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    return a


def _z_design(z, spline_df=None, z_kinds=None):
    return glm.confounder_design(_as_matrix(z), spline_df=spline_df, kinds=z_kinds)


def _ols_multi(design, resp):
    """Least squares for a matrix response; same rank rule as glm.ols."""
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    if diag.max() == 0.0 or diag.min() <= 1e-10 * diag.max():
        raise ValueError("singular design")
    fitted = q @ (q.T @ resp)
    return fitted, resp - fitted


def fit_residual_linear(x, z, spline_df=None, z_kinds=None):
    """Regress x on [1, z] (optionally spline-expanded) and keep residuals.

    The coefficient estimate is frozen here; draws recombine the fitted
    mean with permuted or resampled residual rows and never refit.
    """
    x = _as_matrix(x)
    design = _z_design(z, spline_df, z_kinds)
    if design.shape[0] != x.shape[0]:
        raise ValueError("x and z row counts differ")
    fitted, resid = _ols_multi(design, x)
    return ConditionalModel("residual-linear", fitted_mean=fitted, residuals=resid)


def draw_residual_permutation(model, rng):
    """Fitted mean plus residual rows permuted as units."""
    perm = rng.permutation(model.fitted_mean.shape[0])
    return model.fitted_mean + model.residuals[perm]


def draw_residual_bootstrap(model, rng):
    """Fitted mean plus residual rows resampled with replacement."""
    n = model.fitted_mean.shape[0]
    idx = rng.integers(0, n, size=n)
    return model.fitted_mean + model.residuals[idx]


def fit_parametric_logistic(x, z):
    """Logistic regression of a binary exposure on [1, z].

    Success probabilities are clamped to [1e-8, 1 - 1e-8]. Complete
    separation cannot be resampled from, so it is an error pointing at
    the residual samplers.
    """
    x = np.asarray(x, dtype=float).ravel()
    z = _as_matrix(z)
    design = np.column_stack([np.ones(x.shape[0]), z])
    # separation shows up as fitted probabilities pinned to {0, 1}, which
    # takes hundreds of slow-growth iterations when a point sits near the
    # boundary; the model is fit once, so the budget is cheap
    fit = glm.irls(design, x, "binomial", max_iter=500)
    if fit.reason == "separation":
        raise ValueError(
            "complete separation: x is determined by z, so the conditional law "
            "is degenerate; use a residual sampler or drop confounder columns"
        )
    if not fit.converged:
        warnings.warn("logistic exposure model did not converge; using last iterate")
    eta = design @ fit.coef
    prob = np.clip(1.0 / (1.0 + np.exp(-eta)), 1e-8, 1.0 - 1e-8)
    return ConditionalModel("parametric-logistic", success_prob=prob)


def draw_parametric_bernoulli(model, rng):
    """Independent Bernoulli draws at the fitted success probabilities."""
    return (rng.random(model.success_prob.shape[0]) < model.success_prob).astype(float)


def bin_labels(values, bin_edges):
    """Bin index per row; values equal to an edge fall in the lower bin."""
    edges = np.asarray(bin_edges, dtype=float)
    if edges.size == 0:
        raise ValueError("bin_edges must not be empty")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("bin_edges must be strictly increasing")
    return np.digitize(np.asarray(values, dtype=float), edges, right=True)


def fit_binned_residual(x, z, bin_column, bin_edges):
    """Per-bin regressions of x on [1, z]; residuals stay bin-local.

    Bins are cut on one z column; each bin gets its own least-squares
    fit so the conditional mean can change shape across bins. Every bin
    must hold more than d + 1 rows to leave residual variation.
    """
    x = _as_matrix(x)
    z = _as_matrix(z)
    n, d = z.shape
    if not 0 <= bin_column < d:
        raise IndexError(f"bin_column {bin_column} out of range for d={d}")
    labels = bin_labels(z[:, bin_column], bin_edges)
    fitted = np.empty_like(x)
    resid = np.empty_like(x)
    for b in range(len(np.asarray(bin_edges)) + 1):
        idx = np.nonzero(labels == b)[0]
        if idx.size <= d + 1:
            raise ValueError(
                f"bin {b} holds {idx.size} rows; need more than {d + 1} to fit"
            )
        design = np.column_stack([np.ones(idx.size), z[idx]])
        fitted[idx], resid[idx] = _ols_multi(design, x[idx])
    return ConditionalModel(
        "binned-residual", fitted_mean=fitted, residuals=resid, bins=labels
    )


def draw_binned_permutation(model, rng):
    """Fitted mean plus residual rows permuted within each bin."""
    out = model.fitted_mean.copy()
    for b in np.unique(model.bins):
        idx = np.nonzero(model.bins == b)[0]
        out[idx] += model.residuals[idx[rng.permutation(idx.size)]]
    return out


def fit_for_strategy(strategy, x, z, spline_df=None, z_kinds=None, bin_column=None, bin_edges=None):
    """Fit the conditional model named by a ResamplePlan strategy token."""
    if strategy in ("residual-perm", "residual-boot"):
        return fit_residual_linear(x, z, spline_df=spline_df, z_kinds=z_kinds)
    if strategy == "parametric-logistic":
        return fit_parametric_logistic(x, z)
    if strategy == "binned-perm":
        if bin_column is None or bin_edges is None:
            raise ValueError("binned-perm needs bin_column and bin_edges")
        return fit_binned_residual(x, z, bin_column, bin_edges)
    raise ValueError(f"unknown sampler strategy {strategy!r}; expected one of {STRATEGIES}")


def draw_for_strategy(strategy, model, rng):
    """Draw one exposure matrix (n, p) under the given strategy."""
    if strategy == "residual-perm":
        return draw_residual_permutation(model, rng)
    if strategy == "residual-boot":
        return draw_residual_bootstrap(model, rng)
    if strategy == "parametric-logistic":
        return draw_parametric_bernoulli(model, rng)[:, None]
    if strategy == "binned-perm":
        return draw_binned_permutation(model, rng)
    raise ValueError(f"unknown sampler strategy {strategy!r}; expected one of {STRATEGIES}")
