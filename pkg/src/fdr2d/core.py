"""Shared data model: datasets, statistic tensors, cutoff results."""

from dataclasses import dataclass, field

import numpy as np

X_KINDS = ("continuous", "binary")
Y_KINDS = ("continuous", "binary", "count")
Z_KINDS = ("continuous", "binary")


def _as_matrix(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    return a


@dataclass
class Dataset:
    """One study: exposure x (n, p), outcomes y (n, m), confounders z (n, d).

    Rows are samples and must be aligned across the three blocks.
    Construction coerces shapes but never inspects values; run
    :func:`validate` to diagnose content problems.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    x_kind: str = "continuous"
    y_kind: str = "continuous"
    z_kinds: tuple = ()
    feature_names: tuple = ()

    def __post_init__(self):
        self.x = _as_matrix(self.x)
        self.y = _as_matrix(self.y)
        self.z = _as_matrix(self.z)
        if not self.z_kinds:
            self.z_kinds = tuple(
                "binary" if _looks_binary(self.z[:, c]) else "continuous"
                for c in range(self.z.shape[1])
            )
        else:
            self.z_kinds = tuple(self.z_kinds)
        if not self.feature_names:
            width = len(str(max(self.y.shape[1], 1)))
            self.feature_names = tuple(
                f"f{j + 1:0{width}d}" for j in range(self.y.shape[1])
            )
        else:
            self.feature_names = tuple(self.feature_names)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def m(self):
        return self.y.shape[1]

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def d(self):
        return self.z.shape[1]


def _looks_binary(col):
    finite = col[np.isfinite(col)]
    return finite.size > 0 and np.all((finite == 0.0) | (finite == 1.0))


@dataclass
class Violation:
    """One validation finding, locating the offending entry."""

    matrix: str
    rule: str
    row: int = -1
    col: int = -1
    detail: str = ""

    def __str__(self):
        where = self.matrix
        if self.row >= 0:
            where += f"[{self.row}"
            where += f",{self.col}]" if self.col >= 0 else "]"
        msg = f"{where}: {self.rule}"
        if self.detail:
            msg += f" ({self.detail})"
        return msg


def validate(dataset):
    """Diagnose a dataset against its declared kinds.

    Returns a list of :class:`Violation`; an empty list means the
    dataset is usable. Nothing is raised here so callers can report
    every problem at once.
    """
    out = []
    x, y, z = dataset.x, dataset.y, dataset.z
    n = y.shape[0]
    if x.shape[0] != n:
        out.append(Violation("x", "row-count-mismatch", detail=f"x has {x.shape[0]} rows, y has {n}"))
    if z.shape[0] != n:
        out.append(Violation("z", "row-count-mismatch", detail=f"z has {z.shape[0]} rows, y has {n}"))
    if n < 3:
        out.append(Violation("y", "too-few-rows", detail=f"n={n}, need at least 3"))
    if dataset.x_kind not in X_KINDS:
        out.append(Violation("x", "unknown-kind", detail=dataset.x_kind))
    if dataset.y_kind not in Y_KINDS:
        out.append(Violation("y", "unknown-kind", detail=dataset.y_kind))
    if len(dataset.z_kinds) != z.shape[1]:
        out.append(Violation("z", "kind-count-mismatch", detail=f"{len(dataset.z_kinds)} kinds for {z.shape[1]} columns"))
    for kind in dataset.z_kinds:
        if kind not in Z_KINDS:
            out.append(Violation("z", "unknown-kind", detail=str(kind)))
    if len(dataset.feature_names) != dataset.m:
        out.append(Violation("y", "name-count-mismatch", detail=f"{len(dataset.feature_names)} names for {dataset.m} features"))

    for label, mat in (("x", x), ("y", y), ("z", z)):
        bad = np.argwhere(~np.isfinite(mat))
        for r, c in bad:
            out.append(Violation(label, "non-finite", int(r), int(c)))

    def check_binary(label, mat, cols):
        for c in cols:
            col = mat[:, c]
            finite = np.isfinite(col)
            offenders = np.nonzero(finite & (col != 0.0) & (col != 1.0))[0]
            for r in offenders:
                out.append(Violation(label, "not-binary", int(r), int(c), detail=f"value {col[r]!r}"))

    if dataset.x_kind == "binary":
        check_binary("x", x, range(x.shape[1]))
    if dataset.y_kind == "binary":
        check_binary("y", y, range(y.shape[1]))
    if dataset.y_kind == "count":
        finite = np.isfinite(y)
        offender = finite & ((y < 0) | (y != np.floor(y)))
        for r, c in np.argwhere(offender):
            out.append(Violation("y", "not-count", int(r), int(c), detail=f"value {y[r, c]!r}"))
    for c, kind in enumerate(dataset.z_kinds):
        if kind == "binary" and c < z.shape[1]:
            check_binary("z", z, [c])
    return out


def zero_variance_mask(y):
    """Boolean mask of outcome columns with zero sample variance."""
    if y.shape[0] == 0:
        return np.zeros(y.shape[1], dtype=bool)
    return np.all(y == y[0, :], axis=0)


@dataclass
class StatTensor:
    """Statistic pairs for every feature and resampling draw.

    ``pairs[b, j]`` holds (marginal, conditional) statistics for
    feature j under draw b; b = 0 is the observed data and counts as
    one of the B + 1 exchangeable draws everywhere downstream.
    Features flagged in ``zero_variance`` carry (0, 0) in every row
    and are never rejected.
    """

    pairs: np.ndarray
    zero_variance: np.ndarray
    n: int = 0
    seed: int = 0
    statistic: str = ""
    sampler: str = ""

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=float)
        if self.pairs.ndim != 3 or self.pairs.shape[2] != 2:
            raise ValueError(f"pairs must have shape (B+1, m, 2), got {self.pairs.shape}")
        self.zero_variance = np.asarray(self.zero_variance, dtype=bool)
        if self.zero_variance.shape != (self.pairs.shape[1],):
            raise ValueError("zero_variance length must match the feature count")

    @property
    def b(self):
        """Number of resampling draws (excludes the observed row)."""
        return self.pairs.shape[0] - 1

    @property
    def m(self):
        return self.pairs.shape[1]

    @property
    def marginal(self):
        return self.pairs[:, :, 0]

    @property
    def conditional(self):
        return self.pairs[:, :, 1]


def tensor_slice_feature(tensor, j):
    """Copy of feature j's (B+1, 2) statistic trajectory."""
    if not 0 <= j < tensor.m:
        raise IndexError(f"feature index {j} out of range for m={tensor.m}")
    return tensor.pairs[:, j, :].copy()


@dataclass
class TruthMask:
    """Ground truth for simulations: which features carry no signal."""

    is_null: np.ndarray

    def __post_init__(self):
        self.is_null = np.asarray(self.is_null, dtype=bool)

    @property
    def n_null(self):
        return int(self.is_null.sum())

    @property
    def n_signal(self):
        return int((~self.is_null).sum())


@dataclass
class CutoffResult:
    """Chosen threshold pair and the features it rejects.

    An infeasible search yields t1 = t2 = +inf with no rejections and
    fdp_estimate 0.0.
    """

    t1: float
    t2: float
    rejected: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    fdp_estimate: float = 0.0
    pi0: float = 1.0

    def __post_init__(self):
        self.rejected = np.asarray(self.rejected, dtype=np.int64)

    @property
    def n_rejected(self):
        return int(self.rejected.size)
