"""Reduced-space Newton-CG / proximal-gradient solver for group-l2 regularized problems."""

from .core import (
    CompositeObjective,
    GroupPartition,
    IterateState,
    prox_step,
    prox_update,
    regularizer_gradient_on,
    regularizer_value,
)
from .estimator import GroupLassoLogisticRegression
from .exceptions import (
    DimensionError,
    FarsaError,
    LibSVMParseError,
    LineSearchError,
    NonDifferentiableError,
    NotPositiveDefiniteError,
    UnsupportedDatasetError,
)
from .io import (
    Dataset,
    assign_groups,
    build_instance,
    lambda_min,
    load_libsvm,
    map_labels,
    parse_libsvm,
    scale_features,
    write_libsvm,
)
from .losses import LogisticLoss, QuadraticLoss
from .partition import decompose
from .solver import SolveOptions, SolveReport, estimate_alpha0, solve, solve_baseline_pg

__all__ = [
    "CompositeObjective", "GroupPartition", "IterateState", "prox_step", "prox_update",
    "regularizer_gradient_on", "regularizer_value", "GroupLassoLogisticRegression",
    "DimensionError", "FarsaError", "LibSVMParseError", "LineSearchError",
    "NonDifferentiableError", "NotPositiveDefiniteError", "UnsupportedDatasetError",
    "Dataset", "assign_groups", "build_instance", "lambda_min", "load_libsvm", "map_labels",
    "parse_libsvm", "scale_features", "write_libsvm", "LogisticLoss", "QuadraticLoss",
    "decompose", "SolveOptions", "SolveReport", "estimate_alpha0", "solve", "solve_baseline_pg",
]
