"""Marginal and conditional dependence statistics.

Every statistic maps to a nonnegative float where larger means
stronger dependence, and degenerate inputs give 0 with a warning
rather than NaN, so downstream thresholding never sees missing
values. The scalar functions are the reference forms; make_evaluator
builds the vectorized per-draw versions used while assembling
statistic tensors, sharing whatever does not change across draws
(centered response kernels, confounder projectors, spline knots).
"""

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import stats as _sps

from . import _accel, glm


class StatPair(NamedTuple):
    t_m: float
    t_c: float


@dataclass
class KernelMatrix:
    matrix: np.ndarray
    bandwidth: float


def _as_matrix(a):
    out = np.asarray(a, dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    if out.ndim != 2:
        raise ValueError("expected a vector or a 2-D matrix")
    return out


def _all_rows_equal(a):
    return bool(np.all(a == a[0]))


def gaussian_kernel(points, bandwidth=None):
    """Gaussian kernel matrix with the median-distance bandwidth.

    Squared distances are accumulated column by column from explicit
    differences; the expanded gram form loses precision near ties and
    can go negative.
    """
    pts = _as_matrix(points)
    n = pts.shape[0]
    if n < 2:
        raise ValueError("kernel needs at least two rows")
    d2 = np.zeros((n, n))
    for c in range(pts.shape[1]):
        diff = pts[:, c, None] - pts[None, :, c]
        d2 += diff * diff
    if bandwidth is None:
        iu = np.triu_indices(n, 1)
        bandwidth = float(np.median(np.sqrt(d2[iu])))
        if bandwidth <= 0.0:
            raise ValueError("degenerate bandwidth: median pairwise distance is zero")
    elif bandwidth <= 0.0:
        raise ValueError("bandwidth must be positive")
    k = np.exp(d2 / (-2.0 * bandwidth * bandwidth))
    return KernelMatrix(matrix=k, bandwidth=float(bandwidth))


def _center_kernel(k):
    rm = k.mean(axis=1, keepdims=True)
    cm = k.mean(axis=0, keepdims=True)
    return k - rm - cm + k.mean()


def hsic(x, y, bandwidth_x=None, bandwidth_y=None):
    """Dependence as (1/n) tr(Kx~ Ky~) with doubly centered kernels."""
    x = _as_matrix(x)
    y = _as_matrix(y)
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y row counts differ")
    if _all_rows_equal(x) or _all_rows_equal(y):
        warnings.warn("constant input: dependence statistic set to 0")
        return 0.0
    kx = _center_kernel(gaussian_kernel(x, bandwidth_x).matrix)
    ky = _center_kernel(gaussian_kernel(y, bandwidth_y).matrix)
    return max(0.0, float(np.sum(kx * ky)) / x.shape[0])


def _standardize_columns(a):
    a = _as_matrix(a)
    if a.shape[1] == 0:
        return a
    sd = a.std(axis=0, ddof=1)
    return a / np.where(sd > 0.0, sd, 1.0)


def _regularized(kc, epsilon):
    # e^2 (K + eI)^-1 K (K + eI)^-1 through the eigendecomposition;
    # centered kernels are PSD so negative eigenvalues are noise
    lam, vec = np.linalg.eigh(kc)
    lam = np.maximum(lam, 0.0)
    scale = (epsilon * epsilon) * lam / (lam + epsilon) ** 2
    return (vec * scale) @ vec.T


def _joint_trace_unregularized(x, y, z):
    # the epsilon -> infinity limit of chsic; kept separate for tests
    x = _as_matrix(x)
    z = _as_matrix(z)
    xz = np.hstack([_standardize_columns(x), _standardize_columns(z)])
    yz = np.hstack([_standardize_columns(_as_matrix(y)), _standardize_columns(z)])
    kx = _center_kernel(gaussian_kernel(xz).matrix)
    ky = _center_kernel(gaussian_kernel(yz).matrix)
    return max(0.0, float(np.sum(kx * ky)) / x.shape[0])


def chsic(x, y, z, epsilon=0.001):
    """Conditional dependence from regularized joint kernels.

    Both kernels act on standardized [arg, z] blocks; the spectral
    filter e^2 L/(L+e)^2 damps directions the confounders explain.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    x = _as_matrix(x)
    y = _as_matrix(y)
    z = _as_matrix(z)
    n = x.shape[0]
    if y.shape[0] != n or z.shape[0] != n:
        raise ValueError("x, y and z row counts differ")
    xz = np.hstack([_standardize_columns(x), _standardize_columns(z)])
    yz = np.hstack([_standardize_columns(y), _standardize_columns(z)])
    if _all_rows_equal(xz) or _all_rows_equal(yz):
        warnings.warn("constant input: dependence statistic set to 0")
        return 0.0
    kx = _regularized(_center_kernel(gaussian_kernel(xz).matrix), epsilon)
    ky = _regularized(_center_kernel(gaussian_kernel(yz).matrix), epsilon)
    return max(0.0, float(np.sum(kx * ky)) / n)


def rv_coefficient(u, v):
    """Matrix correlation tr(Suv Svu) / sqrt(tr(Suu^2) tr(Svv^2)) in [0, 1].

    For univariate inputs this is exactly the squared Pearson
    correlation.
    """
    u = _as_matrix(u)
    v = _as_matrix(v)
    if u.shape[0] != v.shape[0]:
        raise ValueError("u and v row counts differ")
    uc = u - u.mean(axis=0)
    vc = v - v.mean(axis=0)
    suv = uc.T @ vc
    suu = uc.T @ uc
    svv = vc.T @ vc
    den = np.sqrt(float(np.sum(suu * suu)) * float(np.sum(svv * svv)))
    if den <= 0.0:
        warnings.warn("zero variance input: dependence statistic set to 0")
        return 0.0
    return float(min(1.0, max(0.0, float(np.sum(suv * suv)) / den)))


def conditional_rv(x, y, z, spline_df=5, z_kinds=None):
    """RV coefficient after projecting out a spline basis in z."""
    design = glm.confounder_design(_as_matrix(z), spline_df=spline_df, kinds=z_kinds)
    proj = glm.projection_complement(design)
    return rv_coefficient(proj @ _as_matrix(x), proj @ _as_matrix(y))


def pearson_chi_square(x, y):
    """2x2 chi-square without continuity correction; binary inputs."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValueError("x and y lengths differ")
    n = x.size
    a = float(x @ y)
    r1 = float(x.sum())
    c1 = float(y.sum())
    b = r1 - a
    c = c1 - a
    d = n - r1 - c1 + a
    r0 = n - r1
    c0 = n - c1
    if min(r1, r0, c1, c0) <= 0.0:
        warnings.warn("degenerate 2x2 margin: statistic set to 0")
        return 0.0
    return float(n * (a * d - b * c) ** 2 / (r1 * r0 * c1 * c0))


def mantel_haenszel(x, y, strata):
    """Stratified 2x2 association: (sum a - E a)^2 / sum Var a.

    With a single stratum this equals (n-1)/n times the chi-square.
    Strata that cannot vary contribute nothing; when none can, the
    statistic is 0 with a warning.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    strata = np.asarray(strata).ravel()
    if x.size != y.size or x.size != strata.size:
        raise ValueError("x, y and strata lengths differ")
    num = 0.0
    den = 0.0
    for lab in np.unique(strata):
        idx = strata == lab
        nk = int(idx.sum())
        if nk < 2:
            continue
        xs = x[idx]
        ys = y[idx]
        r1 = float(xs.sum())
        c1 = float(ys.sum())
        a = float(xs @ ys)
        num += a - r1 * c1 / nk
        den += r1 * (nk - r1) * c1 * (nk - c1) / (nk * nk * (nk - 1.0))
    if den <= 0.0:
        warnings.warn("no informative strata: statistic set to 0")
        return 0.0
    return float(num * num / den)


def _wald_block_py(coef, cov, p):
    """Scalar mirror of the kernel Wald rule for the block at 1..p."""
    maxc = float(np.max(np.abs(coef)))
    if p == 1:
        v = float(cov[1, 1])
        if v <= 0.0:
            return 0.0 if abs(coef[1]) <= 1e-8 * (1.0 + maxc) else _accel.STAT_CAP
        return float(min(_accel.STAT_CAP, abs(coef[1]) / np.sqrt(v)))
    b = coef[1 : 1 + p]
    sub = cov[1 : 1 + p, 1 : 1 + p]
    blockmax = float(np.max(np.abs(b)))
    try:
        q = float(b @ np.linalg.solve(sub, b))
    except np.linalg.LinAlgError:
        q = -1.0
    if not np.isfinite(q) or q < 0.0:
        return 0.0 if blockmax <= 1e-8 * (1.0 + maxc) else _accel.STAT_CAP
    return float(min(_accel.STAT_CAP, q))


def model_stat_pair(y, x, z, family, size=None, max_iter=50, tol=1e-8):
    """(marginal, conditional) Wald statistics from two model fits.

    The conditional statistic tests the exposure block in the model
    with confounders; the marginal one drops the confounders. Fits
    that do not converge give 0 with a warning.
    """
    yv = np.asarray(y, dtype=float).ravel()
    x = _as_matrix(x)
    z = _as_matrix(z) if np.asarray(z).size else np.zeros((yv.size, 0))
    n, p = x.shape
    full = np.column_stack([np.ones(n), x, z])
    red = np.column_stack([np.ones(n), x])
    t_m = t_c = 0.0
    bad = False
    if family == "gaussian":
        t_c = _wald_block_py(*_ols_coef_cov(full, yv), p)
        t_m = _wald_block_py(*_ols_coef_cov(red, yv), p)
    else:
        fit = glm.irls(full, yv, family, max_iter=max_iter, tol=tol, size=size)
        if fit.converged:
            t_c = _wald_block_py(fit.coef, fit.cov, p)
        else:
            bad = True
        fit = glm.irls(red, yv, family, max_iter=max_iter, tol=tol, size=size)
        if fit.converged:
            t_m = _wald_block_py(fit.coef, fit.cov, p)
        else:
            bad = True
    if bad:
        warnings.warn("model fit did not converge: statistic set to 0")
    return StatPair(t_m=float(t_m), t_c=float(t_c))


def _ols_coef_cov(design, yv):
    fit = glm.ols(design, yv)
    return fit.coef, fit.cov


def model_pvalues(ymat, x, z, family, size=None, max_iter=50, tol=1e-8):
    """Two-sided p-values for the exposure block, one per response column.

    Gaussian, univariate exposure uses the t reference; other families
    use the normal; multivariate blocks fall back to chi-square. Fits
    that fail give p = 1 with a warning.
    """
    ymat = _as_matrix(ymat)
    x = _as_matrix(x)
    z = _as_matrix(z) if np.asarray(z).size else np.zeros((ymat.shape[0], 0))
    n, p = x.shape
    full = np.column_stack([np.ones(n), x, z])
    k = full.shape[1]
    m = ymat.shape[1]
    pvals = np.ones(m)
    bad = 0
    for j in range(m):
        yv = ymat[:, j]
        if family == "gaussian":
            try:
                coef, cov = _ols_coef_cov(full, yv)
            except ValueError as err:
                raise ValueError(f"feature {j}: {err}") from None
        else:
            try:
                fit = glm.irls(full, yv, family, max_iter=max_iter, tol=tol, size=size)
            except ValueError as err:
                raise ValueError(f"feature {j}: {err}") from None
            if not fit.converged:
                bad += 1
                continue
            coef, cov = fit.coef, fit.cov
        w = _wald_block_py(coef, cov, p)
        if p == 1:
            if family == "gaussian":
                pvals[j] = 2.0 * _sps.t.sf(w, n - k)
            else:
                pvals[j] = 2.0 * _sps.norm.sf(w)
        else:
            pvals[j] = _sps.chi2.sf(w, p)
    if bad:
        warnings.warn(f"{bad} model fits did not converge: p-values set to 1")
    return pvals


def _feature_basis_builder(values, count):
    """Frozen basis for an exposure: spline for count >= 3, powers below.

    The spline knots come from the values given here, so later calls
    evaluate resampled exposures in the same basis.
    """
    if count < 1:
        raise ValueError("basis size must be at least 1")
    if count < 3:

        def build(v):
            v = np.asarray(v, dtype=float).ravel()
            return np.column_stack([v**kk for kk in range(1, count + 1)])

        return build
    sb = glm.natural_cubic_basis(values, df=count)
    return lambda v: sb.evaluate(np.asarray(v, dtype=float).ravel())


def _basis_confounder_design(z, j2, kinds=None):
    z = _as_matrix(z)
    n, d = z.shape
    cols = [np.ones((n, 1))]
    for c in range(d):
        col = z[:, c]
        binary = (
            kinds[c] == "binary"
            if kinds is not None
            else bool(np.all((col == 0.0) | (col == 1.0)))
        )
        if binary:
            cols.append(col[:, None])
        else:
            cols.append(_feature_basis_builder(col, j2)(col))
    return np.hstack(cols)


def _qf_stat(qf, sigma2, yss):
    # perfect fits have sigma2 == 0 exactly; the statistic is 0 when the
    # quadratic form is negligible at the response scale, capped when not
    if sigma2 == 0.0:
        return 0.0 if qf <= 1e-16 * max(yss, 1.0) else _accel.STAT_CAP
    return float(min(_accel.STAT_CAP, max(0.0, qf / sigma2)))


def basis_wald_pair(y, x, z, j1=5, j2=5, z_kinds=None):
    """Wald statistics for a basis expansion of a univariate exposure.

    Marginal: the exposure basis alone. Conditional: the same basis
    after projecting out [1, basis(z)]. Both share the residual
    variance from the joint model.
    """
    yv = np.asarray(y, dtype=float).ravel()
    xm = _as_matrix(x)
    if xm.shape[1] != 1:
        raise ValueError("basis statistics need a univariate exposure")
    n = yv.size
    zm = _as_matrix(z) if np.asarray(z).size else np.zeros((n, 0))
    bx = _feature_basis_builder(xm[:, 0], j1)(xm[:, 0])
    dz = _basis_confounder_design(zm, j2, kinds=z_kinds)
    full = np.hstack([bx, dz])
    if n <= full.shape[1]:
        raise ValueError("not enough rows for the joint design")
    q, r = np.linalg.qr(full)
    diag = np.abs(np.diag(r))
    if diag.max() == 0.0 or diag.min() <= 1e-10 * diag.max():
        raise ValueError("singular joint design")
    resid = yv - q @ (q.T @ yv)
    rss = float(resid @ resid)
    yss = float(yv @ yv)
    sigma2 = 0.0 if rss <= 1e-24 * yss else rss / (n - full.shape[1])

    mm = bx.T @ yv
    qf_m = float(mm @ np.linalg.solve(bx.T @ bx, mm))
    proj = glm.projection_complement(dz)
    mc = bx.T @ (proj @ yv)
    qf_c = float(mc @ np.linalg.solve(bx.T @ (proj @ bx), mc))
    return StatPair(t_m=_qf_stat(qf_m, sigma2, yss), t_c=_qf_stat(qf_c, sigma2, yss))


class _GlmEvaluator:
    kind = "glm"

    def __init__(self, dataset, family, size, max_iter, tol):
        if family not in glm.FAMILIES:
            raise ValueError(f"unknown family {family!r}; expected one of {glm.FAMILIES}")
        self._y = dataset.y
        self._z = dataset.z
        self._family = family
        self._code = glm._FAMILY_CODES[family]
        self._size = float(size if size is not None else 1.0)
        if family == "negbinom" and (size is None or size <= 0):
            raise ValueError("negbinom family requires a positive size")
        self._max_iter = int(max_iter)
        self._tol = float(tol)
        self._ones = np.ones((dataset.n, 1))

    def pairs(self, x, observed=False):
        x = _as_matrix(x)
        p = x.shape[1]
        full = np.hstack([self._ones, x, self._z])
        red = np.hstack([self._ones, x])
        if self._family == "gaussian":
            tc, w1 = _gaussian_wald_many(full, self._y, p, observed)
            tm, w2 = _gaussian_wald_many(red, self._y, p, observed)
            return tm, tc, w1 + w2
        tm, tc, warn = _accel.wald_pair_many(
            full, red, self._y, p, self._code, self._size, self._max_iter, self._tol
        )
        if observed and np.any(warn == 3):
            j = int(np.argmax(warn == 3))
            raise ValueError(f"singular model fit on observed data (feature index {j})")
        return tm, tc, int(np.count_nonzero(warn))


def _gaussian_wald_many(design, ymat, p, observed):
    """Vectorized gaussian Wald statistics, one design, every response.

    Mirrors the per-fit kernel rules: relative-scale perfect-fit
    detection, 0/cap resolution on zero variance, the same cap.
    """
    n, k = design.shape
    m = ymat.shape[1]
    if n <= k:
        raise ValueError("not enough rows for the model design")
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    if diag.max() == 0.0 or diag.min() <= 1e-10 * diag.max():
        if observed:
            raise ValueError("singular design on observed data")
        return np.zeros(m), m
    qty = q.T @ ymat
    rinv = np.linalg.solve(r, np.eye(k))
    coefs = rinv @ qty
    resid = ymat - q @ qty
    rss = np.einsum("ij,ij->j", resid, resid)
    yss = np.einsum("ij,ij->j", ymat, ymat)
    sigma2 = np.where(rss <= 1e-24 * yss, 0.0, rss / (n - k))
    ainv = rinv @ rinv.T
    maxc = np.max(np.abs(coefs), axis=0)
    cap = _accel.STAT_CAP
    with np.errstate(divide="ignore", invalid="ignore"):
        if p == 1:
            v = sigma2 * ainv[1, 1]
            c1 = np.abs(coefs[1])
            degen = np.where(c1 <= 1e-8 * (1.0 + maxc), 0.0, cap)
            stats_ = np.where(v <= 0.0, degen, np.minimum(c1 / np.sqrt(v), cap))
        else:
            b = coefs[1 : 1 + p]
            sol = np.linalg.solve(ainv[1 : 1 + p, 1 : 1 + p], b)
            qf = np.einsum("pm,pm->m", b, sol) / sigma2
            blockmax = np.max(np.abs(b), axis=0)
            degen = np.where(blockmax <= 1e-8 * (1.0 + maxc), 0.0, cap)
            stats_ = np.where(
                sigma2 <= 0.0, degen, np.minimum(np.maximum(qf, 0.0), cap)
            )
    return stats_, 0


class _RvEvaluator:
    kind = "rv"

    def __init__(self, dataset, spline_df):
        design = glm.confounder_design(dataset.z, spline_df=spline_df, kinds=dataset.z_kinds)
        self._proj = glm.projection_complement(design)
        y = dataset.y
        self._yc = y - y.mean(axis=0)
        self._ycss = np.einsum("ij,ij->j", self._yc, self._yc)
        self._py = self._proj @ y
        self._pyss = np.einsum("ij,ij->j", self._py, self._py)

    def pairs(self, x, observed=False):
        x = _as_matrix(x)
        xc = x - x.mean(axis=0)
        px = self._proj @ x
        tm, w1 = _rv_many(xc, self._yc, self._ycss)
        tc, w2 = _rv_many(px, self._py, self._pyss)
        return tm, tc, w1 + w2


def _rv_many(u, ymat, ycss):
    # univariate responses: tr(Svv^2) = (y'y)^2, so the RV ratio reduces
    # to sum_a (u_a'y)^2 / (||U'U||_F y'y) feature by feature
    uu = u.T @ u
    unorm = float(np.sqrt(np.sum(uu * uu)))
    if unorm <= 0.0:
        return np.zeros(ymat.shape[1]), ymat.shape[1]
    a = u.T @ ymat
    num = np.einsum("pj,pj->j", a, a)
    den = unorm * ycss
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0.0, num / den, 0.0)
    return np.minimum(out, 1.0), 0


class _HsicEvaluator:
    kind = "hsic"

    def __init__(self, dataset, epsilon):
        if epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        y = dataset.y
        z = dataset.z
        n, m = y.shape
        self._n = n
        self._eps = float(epsilon)
        self._zstd = _standardize_columns(z)
        self._ky = np.zeros((m, n, n))
        self._kyz = np.zeros((m, n, n))
        ok = np.ones(m, dtype=bool)
        for j in range(m):
            col = y[:, j]
            try:
                self._ky[j] = _center_kernel(gaussian_kernel(col).matrix)
                yz = np.hstack([_standardize_columns(col[:, None]), self._zstd])
                self._kyz[j] = _regularized(
                    _center_kernel(gaussian_kernel(yz).matrix), self._eps
                )
            except ValueError:
                ok[j] = False
        self._ok = ok
        if not ok.all():
            warnings.warn(
                f"{int((~ok).sum())} features have degenerate kernels; statistics set to 0"
            )

    def pairs(self, x, observed=False):
        x = _as_matrix(x)
        m = self._ky.shape[0]
        try:
            kx = _center_kernel(gaussian_kernel(x).matrix)
            xz = np.hstack([_standardize_columns(x), self._zstd])
            kxz = _regularized(_center_kernel(gaussian_kernel(xz).matrix), self._eps)
        except ValueError:
            if observed:
                raise
            return np.zeros(m), np.zeros(m), m
        tm = np.einsum("ij,mij->m", kx, self._ky) / self._n
        tc = np.einsum("ij,mij->m", kxz, self._kyz) / self._n
        np.maximum(tm, 0.0, out=tm)
        np.maximum(tc, 0.0, out=tc)
        tm[~self._ok] = 0.0
        tc[~self._ok] = 0.0
        return tm, tc, 0


class _CategoricalEvaluator:
    kind = "categorical"

    def __init__(self, dataset):
        z = dataset.z
        n, d = z.shape
        if d and not np.all((z == 0.0) | (z == 1.0)):
            raise ValueError("categorical statistics need binary confounders")
        codes = (
            (z.astype(np.int64) @ (1 << np.arange(d, dtype=np.int64)))
            if d
            else np.zeros(n, dtype=np.int64)
        )
        self._groups = [np.flatnonzero(codes == u) for u in np.unique(codes)]
        self._y = dataset.y
        self._n = n

    def pairs(self, x, observed=False):
        xv = _as_matrix(x)[:, 0]
        y = self._y
        n = float(self._n)
        m = y.shape[1]
        r1 = float(xv.sum())
        r0 = n - r1
        c1 = y.sum(axis=0)
        c0 = n - c1
        a = xv @ y
        warn = 0
        if r1 <= 0.0 or r0 <= 0.0:
            tm = np.zeros(m)
            warn += 1
        else:
            d0 = a * (n - r1 - c1 + a) - (r1 - a) * (c1 - a)
            den = r1 * r0 * c1 * c0
            with np.errstate(divide="ignore", invalid="ignore"):
                tm = np.where(den > 0.0, n * d0 * d0 / den, 0.0)

        num = np.zeros(m)
        den2 = np.zeros(m)
        for idx in self._groups:
            nk = idx.size
            if nk < 2:
                continue
            xs = xv[idx]
            ys = y[idx]
            rs = float(xs.sum())
            cs = ys.sum(axis=0)
            num += xs @ ys - rs * cs / nk
            den2 += rs * (nk - rs) * cs * (nk - cs) / (nk * nk * (nk - 1.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            tc = np.where(den2 > 0.0, num * num / den2, 0.0)
        return tm, tc, warn


class _BasisWaldEvaluator:
    kind = "basis-wald"

    def __init__(self, dataset, j1, j2):
        if dataset.x.shape[1] != 1:
            raise ValueError("basis statistics need a univariate exposure")
        self._builder = _feature_basis_builder(dataset.x[:, 0], j1)
        self._dz = _basis_confounder_design(dataset.z, j2, kinds=dataset.z_kinds)
        self._proj = glm.projection_complement(self._dz)
        self._y = dataset.y
        self._py = self._proj @ dataset.y
        self._yss = np.einsum("ij,ij->j", dataset.y, dataset.y)
        n = dataset.n
        if n <= j1 + self._dz.shape[1]:
            raise ValueError("not enough rows for the joint design")

    def pairs(self, x, observed=False):
        bx = self._builder(_as_matrix(x)[:, 0])
        y = self._y
        n = y.shape[0]
        m = y.shape[1]
        full = np.hstack([bx, self._dz])
        q, r = np.linalg.qr(full)
        diag = np.abs(np.diag(r))
        if diag.max() == 0.0 or diag.min() <= 1e-10 * diag.max():
            if observed:
                raise ValueError("singular joint design on observed data")
            return np.zeros(m), np.zeros(m), m
        qty = q.T @ y
        resid = y - q @ qty
        rss = np.einsum("ij,ij->j", resid, resid)
        sigma2 = np.where(rss <= 1e-24 * self._yss, 0.0, rss / (n - full.shape[1]))

        mm = bx.T @ y
        mc = bx.T @ self._py
        try:
            qf_m = np.einsum("pj,pj->j", mm, np.linalg.solve(bx.T @ bx, mm))
            qf_c = np.einsum(
                "pj,pj->j", mc, np.linalg.solve(bx.T @ (self._proj @ bx), mc)
            )
        except np.linalg.LinAlgError:
            if observed:
                raise ValueError("singular exposure basis on observed data") from None
            return np.zeros(m), np.zeros(m), m
        tm = _qf_stat_many(qf_m, sigma2, self._yss)
        tc = _qf_stat_many(qf_c, sigma2, self._yss)
        return tm, tc, 0


def _qf_stat_many(qf, sigma2, yss):
    cap = _accel.STAT_CAP
    degen = np.where(qf <= 1e-16 * np.maximum(yss, 1.0), 0.0, cap)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(sigma2 > 0.0, np.minimum(np.maximum(qf / sigma2, 0.0), cap), degen)
    return out


def make_evaluator(
    dataset,
    kind,
    family: Optional[str] = None,
    size=None,
    spline_df=5,
    epsilon=0.001,
    j1=5,
    j2=5,
    max_iter=50,
    tol=1e-8,
):
    """Vectorized statistic evaluator for one dataset.

    The returned object computes (marginal, conditional, warn_count)
    for an exposure matrix via .pairs(x, observed=...); observed=True
    turns silent failures into errors so a broken fit on the real data
    aborts instead of producing a zero row.
    """
    if kind == "glm":
        if family is None:
            raise ValueError("glm statistics need a family")
        return _GlmEvaluator(dataset, family, size, max_iter, tol)
    if kind == "rv":
        return _RvEvaluator(dataset, spline_df)
    if kind == "hsic":
        return _HsicEvaluator(dataset, epsilon)
    if kind == "categorical":
        return _CategoricalEvaluator(dataset)
    if kind == "basis-wald":
        return _BasisWaldEvaluator(dataset, j1, j2)
    raise ValueError(
        f"unknown statistic kind {kind!r}; expected glm, rv, hsic, categorical or basis-wald"
    )
