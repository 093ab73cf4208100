"""Regression fitting layer: least squares, IRLS, splines, projections.

Everything downstream (statistics, samplers) builds designs and hands
them here. Fits never fall back to ridge or pseudo-inverse tricks; a
rank-deficient design is an error the caller must see.
"""

from dataclasses import dataclass

import numpy as np

from . import _accel

FAMILIES = ("gaussian", "binomial", "poisson", "negbinom")
_FAMILY_CODES = {
    "gaussian": _accel.GAUSSIAN,
    "binomial": _accel.BINOMIAL,
    "poisson": _accel.POISSON,
    "negbinom": _accel.NEGBINOM,
}

# relative R-diagonal threshold for declaring a design singular
_RANK_TOL = 1e-10
# rss below this fraction of the response sum of squares is a perfect fit
_PERFECT_TOL = 1e-24


@dataclass
class LinearFit:
    """Least-squares fit with t-scale standard errors.

    sigma2 is the residual variance rss / (n - k); it is exactly 0.0
    when the design reproduces the response to float precision.
    """

    coef: np.ndarray
    se: np.ndarray
    sigma2: float
    residuals: np.ndarray
    fitted: np.ndarray
    cov: np.ndarray
    df_resid: int


@dataclass
class GlmFit:
    """IRLS fit; cov is the inverse observed Fisher information."""

    coef: np.ndarray
    se: np.ndarray
    converged: bool
    n_iter: int
    reason: str | None
    cov: np.ndarray
    family: str


def ols(design, response):
    """Ordinary least squares via QR.

    Raises ValueError("singular design") when any R diagonal falls
    below 1e-10 of the largest, or when there are no residual degrees
    of freedom. No silent regularization.
    """
    design = np.ascontiguousarray(design, dtype=float)
    y = np.asarray(response, dtype=float).ravel()
    n, k = design.shape
    if y.shape[0] != n:
        raise ValueError(f"response length {y.shape[0]} does not match design rows {n}")
    if n <= k:
        raise ValueError("singular design: no residual degrees of freedom")
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    if diag.max() == 0.0 or diag.min() <= _RANK_TOL * diag.max():
        raise ValueError("singular design")
    coef = np.linalg.solve(r, q.T @ y)
    fitted = design @ coef
    residuals = y - fitted
    rss = float(residuals @ residuals)
    yss = float(y @ y)
    sigma2 = 0.0 if rss <= _PERFECT_TOL * yss else rss / (n - k)
    rinv = np.linalg.inv(r)
    cov = sigma2 * (rinv @ rinv.T)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return LinearFit(coef, se, sigma2, residuals, fitted, cov, n - k)


def irls(design, response, family, max_iter=50, tol=1e-8, size=None):
    """Fit a GLM by iteratively reweighted least squares.

    Families: gaussian (identity link; identical to :func:`ols`),
    binomial (logit), poisson (log), negbinom (log, fixed ``size``).
    Dispersion is never estimated. A non-converged fit is returned,
    not raised; ``reason`` is "max_iter" or "separation".
    """
    if family not in _FAMILY_CODES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if family == "negbinom":
        if size is None or size <= 0:
            raise ValueError("negbinom family requires a positive size")
    design = np.ascontiguousarray(design, dtype=float)
    y = np.ascontiguousarray(response, dtype=float).ravel()
    n, k = design.shape
    if y.shape[0] != n:
        raise ValueError(f"response length {y.shape[0]} does not match design rows {n}")
    if family == "binomial" and not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("binomial family requires a 0/1 response")
    if family in ("poisson", "negbinom") and (np.any(y < 0) or np.any(y != np.floor(y))):
        raise ValueError(f"{family} family requires a non-negative integer response")

    coef, cov, status, n_iter = _accel.glm_fit(
        design, y, _FAMILY_CODES[family], float(size or 1.0), int(max_iter), float(tol)
    )
    if status == 3:
        raise ValueError("singular design")
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    reason = {0: None, 1: "max_iter", 2: "separation"}[status]
    return GlmFit(coef, se, status == 0, int(n_iter), reason, cov, family)


@dataclass
class SplineBasis:
    """Natural cubic spline basis: df columns, linear beyond the boundary.

    Built from the truncated-power representation with the boundary
    second derivatives pinned to zero, so a design [1, basis] spans the
    natural cubic spline space on the df + 1 knots.
    """

    df: int
    interior_knots: np.ndarray
    boundary_knots: tuple

    def evaluate(self, values):
        v = np.asarray(values, dtype=float).ravel()
        knots = np.concatenate(
            [[self.boundary_knots[0]], self.interior_knots, [self.boundary_knots[1]]]
        )
        kk = knots.size
        last = knots[-1]
        cube_last = np.clip(v - last, 0.0, None) ** 3

        def ramp(j):
            return (np.clip(v - knots[j], 0.0, None) ** 3 - cube_last) / (last - knots[j])

        ref = ramp(kk - 2)
        cols = [v]
        for j in range(kk - 2):
            cols.append(ramp(j) - ref)
        return np.column_stack(cols)


def natural_cubic_basis(values, df=5):
    """Natural cubic spline basis with knots placed from ``values``.

    Interior knots sit at the equally spaced quantiles i/df for
    i = 1..df-1; boundary knots at the min and max. Raises when the
    values cannot support df distinct knot positions or the evaluated
    matrix is rank deficient.
    """
    if df < 3:
        raise ValueError("df must be at least 3")
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise ValueError("values must be non-empty and finite")
    if np.unique(v).size < df:
        raise ValueError(f"fewer than df={df} distinct values")
    probs = np.arange(1, df) / df
    interior = np.quantile(v, probs)
    boundary = (float(v.min()), float(v.max()))
    knots = np.concatenate([[boundary[0]], interior, [boundary[1]]])
    if np.unique(knots).size != knots.size:
        raise ValueError(
            "ties collapse the knot sequence; need more distinct values for this df"
        )
    basis = SplineBasis(df, np.asarray(interior, dtype=float), boundary)
    if np.linalg.matrix_rank(basis.evaluate(v)) < df:
        raise ValueError("spline basis is rank deficient on these values")
    return basis


def confounder_design(z, spline_df=None, kinds=None):
    """Design [1, T(z)]: spline-expand continuous columns when asked.

    Binary columns (declared through ``kinds`` or detected as 0/1) stay
    raw; continuous columns are replaced by their natural cubic spline
    basis when ``spline_df`` is given.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n, d = z.shape
    cols = [np.ones((n, 1))]
    for c in range(d):
        col = z[:, c]
        binary = (
            kinds[c] == "binary"
            if kinds is not None
            else bool(np.all((col == 0.0) | (col == 1.0)))
        )
        if spline_df is not None and not binary:
            cols.append(natural_cubic_basis(col, df=spline_df).evaluate(col))
        else:
            cols.append(col[:, None])
    return np.hstack(cols)


def projection_complement(basis):
    """Symmetric idempotent projector onto the orthocomplement of col(basis).

    Rank-deficient bases are handled through the SVD; the projector is
    exact for the column space actually present.
    """
    basis = np.asarray(basis, dtype=float)
    if basis.ndim == 1:
        basis = basis[:, None]
    n = basis.shape[0]
    if basis.shape[1] == 0:
        return np.eye(n)
    u, s, _ = np.linalg.svd(basis, full_matrices=False)
    keep = s > s[0] * max(basis.shape) * np.finfo(float).eps if s.size else np.zeros(0, bool)
    u = u[:, keep]
    p = np.eye(n) - u @ u.T
    return (p + p.T) / 2.0
