"""Decision layer: statistic tensors and joint threshold selection.

A StatTensor stacks (marginal, conditional) statistic pairs for the
observed exposure (row 0) and B conditional resamples. Everything
downstream is counting: how many pairs dominate a threshold pair,
pooled over draws for the numerator and on the observed row for the
rejections. The search picks, among threshold pairs whose estimated
false discovery proportion stays below q, the one rejecting the most
features.

Features flagged zero-variance carry (0, 0) in every row: they still
contribute to the pooled numerator (conservative) but are excluded
from observed rejection counts and can never be rejected.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import _accel, _rng, core, samplers, stats
from .core import CutoffResult

METHODS = (
    "mf2d-fdr",
    "mf2d-fwer",
    "mf1d",
    "bh",
    "exchangeable-path",
    "ordered-grid",
)


@dataclass(frozen=True)
class StatisticSpec:
    """Which dependence statistic to compute, with its knobs."""

    kind: str
    family: Optional[str] = None
    size: Optional[float] = None
    spline_df: int = 5
    epsilon: float = 0.001
    j1: int = 5
    j2: int = 5
    max_iter: int = 50
    tol: float = 1e-8

    @property
    def token(self):
        return f"glm:{self.family}" if self.kind == "glm" else self.kind

    @classmethod
    def from_token(cls, token, **overrides):
        token = token.strip()
        if token.startswith("glm:"):
            return cls(kind="glm", family=token[4:], **overrides)
        if token == "glm":
            raise ValueError("glm statistics need a family, e.g. glm:gaussian")
        return cls(kind=token, **overrides)


@dataclass
class ResamplePlan:
    """How to draw exchangeable copies of the exposure."""

    strategy: str
    b_count: int
    seed: int
    spline_df: Optional[int] = None
    bin_column: Optional[int] = None
    bin_edges: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.strategy not in samplers.STRATEGIES:
            raise ValueError(
                f"unknown sampler strategy {self.strategy!r}; expected one of {samplers.STRATEGIES}"
            )
        if self.b_count < 1:
            raise ValueError("b_count must be at least 1")


@dataclass
class ProcedureConfig:
    """Target level, method and search-domain choices."""

    q: float = 0.05
    method: str = "mf2d-fdr"
    pi0_lambda: Union[None, str, float] = None
    grid: str = "quantile:100"
    path_steps: int = 100

    def __post_init__(self):
        if not (0.0 < self.q <= 1.0):
            raise ValueError("q must lie in (0, 1]")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.pi0_lambda is not None and self.pi0_lambda != "auto":
            lam = float(self.pi0_lambda)
            if not np.isfinite(lam) or lam <= 0.0:
                raise ValueError("pi0_lambda must be 'auto' or a finite positive number")
        if self.path_steps < 1:
            raise ValueError("path_steps must be at least 1")


@dataclass
class Grid2D:
    """Sorted threshold candidates per axis."""

    t1_values: np.ndarray
    t2_values: np.ndarray
    construction: str = "observed-values"

    def __post_init__(self):
        self.t1_values = np.ascontiguousarray(self.t1_values, dtype=float)
        self.t2_values = np.ascontiguousarray(self.t2_values, dtype=float)
        for axis in (self.t1_values, self.t2_values):
            if axis.size == 0:
                raise ValueError("grid axes must be nonempty")
            if np.any(axis < 0.0):
                raise ValueError("grid values must be nonnegative")
            if np.any(np.diff(axis) <= 0.0):
                raise ValueError("grid axes must be strictly increasing")


@dataclass
class MonotonePath:
    """Threshold chain, componentwise nondecreasing from loose to strict."""

    t1: np.ndarray
    t2: np.ndarray

    def __post_init__(self):
        self.t1 = np.asarray(self.t1, dtype=float).ravel()
        self.t2 = np.asarray(self.t2, dtype=float).ravel()
        if self.t1.size == 0 or self.t1.size != self.t2.size:
            raise ValueError("empty or mismatched path")
        if np.any(np.diff(self.t1) < 0.0) or np.any(np.diff(self.t2) < 0.0):
            raise ValueError("path must be monotone nondecreasing in both coordinates")


_FAMILY_FOR_KIND = {"gaussian": "continuous", "binomial": "binary", "poisson": "count", "negbinom": "count"}


def _check_compat(dataset, plan, spec):
    if plan.strategy == "parametric-logistic":
        if dataset.x_kind != "binary":
            raise ValueError("parametric-logistic sampler needs a binary exposure")
    elif dataset.x_kind != "continuous":
        raise ValueError(f"{plan.strategy} sampler needs a continuous exposure")
    if spec.kind == "hsic" and dataset.x_kind != "continuous":
        raise ValueError("hsic statistics need a continuous exposure")
    if spec.kind == "basis-wald" and (
        dataset.x_kind != "continuous" or dataset.y_kind != "continuous"
    ):
        raise ValueError("basis statistics need continuous exposure and outcomes")
    if spec.kind == "categorical":
        if dataset.x_kind != "binary" or dataset.y_kind != "binary":
            raise ValueError("categorical statistics need binary exposure and outcomes")
        if any(k != "binary" for k in dataset.z_kinds):
            raise ValueError("categorical statistics need binary confounders")
    if spec.kind == "glm":
        want = _FAMILY_FOR_KIND.get(spec.family)
        if want is None:
            raise ValueError(f"unknown family {spec.family!r}")
        if dataset.y_kind != want:
            raise ValueError(
                f"family {spec.family} expects {want} outcomes, dataset has {dataset.y_kind}"
            )


def build_tensor(dataset, plan, spec):
    """Statistic pairs for the observed exposure and B resampled copies.

    Row 0 is the observed data; rows 1..B use draws from the plan's
    conditional sampler, each on its own deterministic substream of the
    plan seed. A statistic failure on the observed data aborts; on
    resampled rows it becomes a zero pair, counted and reported once.
    """
    violations = core.validate(dataset)
    if violations:
        head = "; ".join(str(v) for v in violations[:5])
        raise ValueError(f"invalid dataset: {head}")
    _check_compat(dataset, plan, spec)
    evaluator = stats.make_evaluator(
        dataset,
        spec.kind,
        family=spec.family,
        size=spec.size,
        spline_df=spec.spline_df,
        epsilon=spec.epsilon,
        j1=spec.j1,
        j2=spec.j2,
        max_iter=spec.max_iter,
        tol=spec.tol,
    )
    model = samplers.fit_for_strategy(
        plan.strategy,
        dataset.x,
        dataset.z,
        spline_df=plan.spline_df,
        z_kinds=dataset.z_kinds,
        bin_column=plan.bin_column,
        bin_edges=plan.bin_edges,
    )
    b = plan.b_count
    pairs = np.zeros((b + 1, dataset.m, 2))
    tm, tc, warn_total = evaluator.pairs(dataset.x, observed=True)
    pairs[0, :, 0] = tm
    pairs[0, :, 1] = tc
    for draw in range(1, b + 1):
        rng = _rng.substream(plan.seed, draw)
        xb = samplers.draw_for_strategy(plan.strategy, model, rng)
        tm, tc, bad = evaluator.pairs(xb, observed=False)
        pairs[draw, :, 0] = tm
        pairs[draw, :, 1] = tc
        warn_total += bad
    zv = core.zero_variance_mask(dataset.y)
    pairs[:, zv, :] = 0.0
    if warn_total:
        warnings.warn(
            f"{warn_total} statistic evaluations failed across {b + 1} draws; set to 0"
        )
    return core.StatTensor(
        pairs=pairs,
        zero_variance=zv,
        n=dataset.n,
        seed=plan.seed,
        statistic=spec.token,
        sampler=plan.strategy,
    )


def make_grid(tensor, spec="quantile:100"):
    """Threshold grid from the pooled statistic values.

    'observed' uses every distinct pooled value; 'quantile:<G>' the G
    equally spaced pooled quantiles. Both prepend 0 so the loosest
    corner is always searchable.
    """
    token = str(spec).strip()
    tm = tensor.pairs[:, :, 0].ravel()
    tc = tensor.pairs[:, :, 1].ravel()
    if token == "observed":
        t1 = np.unique(np.concatenate([[0.0], tm]))
        t2 = np.unique(np.concatenate([[0.0], tc]))
        return Grid2D(t1, t2, "observed-values")
    if token.startswith("quantile:"):
        g = int(token.split(":", 1)[1])
        if g < 1:
            raise ValueError("quantile grid size must be at least 1")
        levels = np.arange(1, g + 1) / g
        t1 = np.quantile(tm, levels, method="inverted_cdf")
        t2 = np.quantile(tc, levels, method="inverted_cdf")
        t1 = np.unique(np.concatenate([[0.0], t1]))
        t2 = np.unique(np.concatenate([[0.0], t2]))
        return Grid2D(t1, t2, "quantile")
    raise ValueError(f"unknown grid spec {spec!r}; expected 'observed' or 'quantile:<G>'")


def default_path(tensor, steps=100):
    """Diagonal quantile path over the distinct pooled values per axis.

    steps equal to the distinct-value count makes the path visit every
    value of that axis.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    d1 = np.unique(tensor.pairs[:, :, 0])
    d2 = np.unique(tensor.pairs[:, :, 1])
    levels = np.arange(1, steps + 1) / steps
    t1 = np.quantile(d1, levels, method="inverted_cdf")
    t2 = np.quantile(d2, levels, method="inverted_cdf")
    return MonotonePath(t1=t1, t2=t2)


def fbar(tensor, j, t1, t2):
    """Share of draws (observed included) where feature j dominates (t1, t2)."""
    pj = tensor.pairs[:, j, :]
    return float(np.mean((pj[:, 0] >= t1) & (pj[:, 1] >= t2)))


def fdp_tilde(tensor, t1, t2, pi0=None):
    """Estimated false discovery proportion at one threshold pair.

    Pooled dominance count over all draws and features (divided by
    B + 1), scaled by pi0 when given, over the observed rejection
    count floored at 1. Zero-variance features count in the numerator
    but never as rejections.
    """
    p = tensor.pairs
    b1 = p.shape[0]
    total = int(np.count_nonzero((p[:, :, 0] >= t1) & (p[:, :, 1] >= t2)))
    valid = ~tensor.zero_variance
    robs = int(
        np.count_nonzero((p[0, valid, 0] >= t1) & (p[0, valid, 1] >= t2))
    )
    mult = 1.0 if pi0 is None else float(pi0)
    return mult * (total / b1) / max(1, robs)


def storey_pi0(tensor, lam):
    """Null-proportion estimate from the low end of the conditional axis."""
    tc = tensor.pairs[:, :, 1]
    b1 = tc.shape[0]
    num = int(np.count_nonzero(tc[0] <= lam))
    den = np.count_nonzero(tc <= lam) / b1
    if num == 0 or den == 0.0:
        warnings.warn("no statistics at or below lambda; null proportion set to 1")
        return 1.0
    return float(min(1.0, num / den))


def auto_lambda(tensor):
    """Default Storey threshold: half the median pooled conditional value."""
    return 0.5 * float(np.median(tensor.pairs[:, :, 1]))


def resolve_pi0(tensor, config):
    """(pi0, lambda) for a config; (1.0, None) when no correction asked."""
    if config.pi0_lambda is None:
        return 1.0, None
    lam = auto_lambda(tensor) if config.pi0_lambda == "auto" else float(config.pi0_lambda)
    return storey_pi0(tensor, lam), lam


def _grid_counts(tensor, grid):
    p = tensor.pairs
    tm_all = np.ascontiguousarray(p[:, :, 0].ravel())
    tc_all = np.ascontiguousarray(p[:, :, 1].ravel())
    counts_all = _accel.pair_exceed_counts(tm_all, tc_all, grid.t1_values, grid.t2_values)
    valid = ~tensor.zero_variance
    tm0 = np.ascontiguousarray(p[0, valid, 0])
    tc0 = np.ascontiguousarray(p[0, valid, 1])
    robs = _accel.pair_exceed_counts(tm0, tc0, grid.t1_values, grid.t2_values)
    return counts_all, robs


def _search(tensor, grid, q, pi0, mode):
    """Best feasible grid point: most rejections, then smallest criterion,
    then smallest t1, then smallest t2. The criterion is the estimated
    FDP for mode 'fdr' and pi0 times the summed dominance fraction
    (the family-wise error estimate) for mode 'fwer'.
    """
    counts_all, robs = _grid_counts(tensor, grid)
    b1 = tensor.pairs.shape[0]
    sumf = counts_all / float(b1)
    if mode == "fdr":
        crit = pi0 * sumf / np.maximum(robs, 1)
    else:
        crit = pi0 * sumf
    feas = crit <= q
    if not feas.any():
        return CutoffResult(np.inf, np.inf, np.zeros(0, dtype=np.int64), 0.0, pi0)
    rmask = np.where(feas, robs, -1)
    best_r = int(rmask.max())
    cand = feas & (robs == best_r)
    critmask = np.where(cand, crit, np.inf)
    best_c = critmask.min()
    cand &= critmask == best_c
    flat = int(np.argmax(cand.ravel()))
    a, c = divmod(flat, grid.t2_values.size)
    t1s = float(grid.t1_values[a])
    t2s = float(grid.t2_values[c])
    obs = tensor.pairs[0]
    valid = ~tensor.zero_variance
    rejected = np.flatnonzero(valid & (obs[:, 0] >= t1s) & (obs[:, 1] >= t2s)).astype(
        np.int64
    )
    return CutoffResult(t1s, t2s, rejected, float(crit[a, c]), pi0)


def optimal_cutoff(tensor, config):
    """Threshold pair maximizing rejections subject to fdp_tilde <= q."""
    pi0, _ = resolve_pi0(tensor, config)
    grid = make_grid(tensor, config.grid)
    return _search(tensor, grid, config.q, pi0, "fdr")


def fwer_cutoff(tensor, config):
    """As optimal_cutoff but constraining the summed dominance fraction."""
    pi0, _ = resolve_pi0(tensor, config)
    grid = make_grid(tensor, config.grid)
    return _search(tensor, grid, config.q, pi0, "fwer")


def one_dim_cutoff(tensor, config):
    """optimal_cutoff restricted to t1 = 0: conditional axis only."""
    pi0, _ = resolve_pi0(tensor, config)
    g = make_grid(tensor, config.grid)
    grid = Grid2D(np.zeros(1), g.t2_values, g.construction)
    return _search(tensor, grid, config.q, pi0, "fdr")


def _walk(tensor, path, q, pi0):
    mult = 1.0 if pi0 is None else float(pi0)
    for s in range(path.t1.size):
        t1 = float(path.t1[s])
        t2 = float(path.t2[s])
        crit = fdp_tilde(tensor, t1, t2, pi0)
        if crit <= q:
            obs = tensor.pairs[0]
            valid = ~tensor.zero_variance
            rejected = np.flatnonzero(
                valid & (obs[:, 0] >= t1) & (obs[:, 1] >= t2)
            ).astype(np.int64)
            return CutoffResult(t1, t2, rejected, float(crit), mult)
    return CutoffResult(np.inf, np.inf, np.zeros(0, dtype=np.int64), 0.0, mult)


def exchangeable_path(tensor, path, q):
    """First point on a monotone path where the pooled-count FDP bound
    drops to q; rejections happen there. No pi0 correction: the plain
    ratio is what carries the finite-sample guarantee.
    """
    return _walk(tensor, path, q, None)


def ordered_grid_procedure(tensor, path, q, pi0=None):
    """Smallest chain index whose fdp_tilde is at most q."""
    return _walk(tensor, path, q, pi0)


def bh_procedure(pvalues, q):
    """Step-up rule: reject the k* smallest p-values where
    k* = max{k : p_(k) <= q k / m}; the comparison is inclusive.
    """
    p = np.asarray(pvalues, dtype=float).ravel()
    if p.size == 0:
        return np.zeros(0, dtype=np.int64)
    if np.any(~np.isfinite(p)) or np.any((p < 0.0) | (p > 1.0)):
        raise ValueError("p-values must lie in [0, 1]")
    order = np.argsort(p, kind="stable")
    ok = p[order] <= q * np.arange(1, p.size + 1) / p.size
    if not ok.any():
        return np.zeros(0, dtype=np.int64)
    k = int(np.nonzero(ok)[0].max())
    return np.sort(order[: k + 1]).astype(np.int64)


def grid_surface(tensor, grid, pi0=1.0):
    """(sum_fbar, observed rejections, fdp_tilde) arrays over the grid."""
    counts_all, robs = _grid_counts(tensor, grid)
    b1 = tensor.pairs.shape[0]
    sumf = counts_all / float(b1)
    crit = pi0 * sumf / np.maximum(robs, 1)
    return sumf, robs, crit


def apply_method(tensor, config):
    """Run the configured thresholding method on a finished tensor."""
    if config.method == "mf2d-fdr":
        return optimal_cutoff(tensor, config)
    if config.method == "mf2d-fwer":
        return fwer_cutoff(tensor, config)
    if config.method == "mf1d":
        return one_dim_cutoff(tensor, config)
    if config.method == "exchangeable-path":
        return exchangeable_path(tensor, default_path(tensor, config.path_steps), config.q)
    if config.method == "ordered-grid":
        pi0 = None
        if config.pi0_lambda is not None:
            pi0, _ = resolve_pi0(tensor, config)
        return ordered_grid_procedure(
            tensor, default_path(tensor, config.path_steps), config.q, pi0
        )
    raise ValueError(f"method {config.method!r} does not run on a tensor")
