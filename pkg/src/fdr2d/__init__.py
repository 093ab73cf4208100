"""Two-dimensional false discovery rate control via conditional resampling.

Features are tested by jointly thresholding a marginal and a
conditional association statistic; the threshold pair is calibrated by
resampling the exposure from its fitted conditional law given the
confounders.
"""

from .core import CutoffResult, Dataset, StatTensor, TruthMask, validate
from .engine import (
    METHODS,
    Grid2D,
    MonotonePath,
    ProcedureConfig,
    ResamplePlan,
    StatisticSpec,
    apply_method,
    bh_procedure,
    build_tensor,
    default_path,
    exchangeable_path,
    fbar,
    fdp_tilde,
    fwer_cutoff,
    grid_surface,
    make_grid,
    one_dim_cutoff,
    optimal_cutoff,
    ordered_grid_procedure,
    storey_pi0,
)
from .io import load_dataset, load_matrix, save_matrix
from .preprocess import preprocess_counts
from .sim import (
    ExperimentSummary,
    SimConfig,
    gen_dataset,
    gen_signals,
    run_experiment,
    run_method_comparison,
    run_replication,
    score_rejections,
)

__version__ = "0.1.0"

__all__ = [
    "METHODS",
    "CutoffResult",
    "Dataset",
    "ExperimentSummary",
    "Grid2D",
    "MonotonePath",
    "ProcedureConfig",
    "ResamplePlan",
    "SimConfig",
    "StatTensor",
    "StatisticSpec",
    "TruthMask",
    "apply_method",
    "bh_procedure",
    "build_tensor",
    "default_path",
    "exchangeable_path",
    "fbar",
    "fdp_tilde",
    "fwer_cutoff",
    "gen_dataset",
    "gen_signals",
    "grid_surface",
    "load_dataset",
    "load_matrix",
    "make_grid",
    "one_dim_cutoff",
    "optimal_cutoff",
    "ordered_grid_procedure",
    "preprocess_counts",
    "run_experiment",
    "run_method_comparison",
    "run_replication",
    "save_matrix",
    "score_rejections",
    "storey_pi0",
    "validate",
]
