"""Count-matrix preparation for compositional omics data.

Order of operations is fixed: prevalence filter, then optional
rarefaction, then either a center log-ratio transform or a
presence/absence binarization. Each step is optional; the default is
a no-op pass-through.
"""

import numpy as np


def prevalence_filter(counts, min_fraction):
    """Columns with a nonzero entry in at least ``min_fraction`` of rows."""
    present = np.mean(counts > 0, axis=0)
    return np.flatnonzero(present >= min_fraction)


def rarefy_counts(counts, rng):
    """Subsample every row to the minimum row total.

    Each row is drawn without replacement from its own counts
    (multivariate hypergeometric), so column totals shrink but no
    entry grows.
    """
    totals = counts.sum(axis=1)
    zero_rows = np.flatnonzero(totals == 0)
    if zero_rows.size:
        raise ValueError(f"cannot rarefy: row {zero_rows[0]} has zero total count")
    depth = int(totals.min())
    out = np.empty_like(counts)
    for i in range(counts.shape[0]):
        row = counts[i].astype(np.int64)
        if row.sum() == depth:
            out[i] = row
        else:
            out[i] = rng.multivariate_hypergeometric(row, depth)
    return out


def clr_transform(counts, pseudocount=0.5):
    """log((c + pseudocount) / geometric row mean of (c + pseudocount))."""
    shifted = counts + pseudocount
    logs = np.log(shifted)
    return logs - logs.mean(axis=1, keepdims=True)


def preprocess_counts(
    counts,
    prevalence_min=0.0,
    rarefy=False,
    clr=False,
    binarize=False,
    seed=0,
    pseudocount=0.5,
):
    """Full pipeline; returns (matrix, kept column indices)."""
    if clr and binarize:
        raise ValueError("clr and binarize are mutually exclusive")
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2:
        raise ValueError("counts must be a 2-d matrix")
    if np.any(~np.isfinite(counts)) or np.any(counts < 0):
        raise ValueError("counts must be finite and nonnegative")
    if np.any(counts != np.floor(counts)):
        raise ValueError("counts must be integer-valued")
    kept = prevalence_filter(counts, prevalence_min)
    out = counts[:, kept]
    if rarefy:
        out = rarefy_counts(out, np.random.default_rng(seed))
    if clr:
        out = clr_transform(out, pseudocount)
    elif binarize:
        out = (out > 0).astype(float)
    return out, kept
