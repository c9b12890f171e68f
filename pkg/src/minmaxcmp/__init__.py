"""Verification lab for min-max comparison bounds between Gaussian and Gaussian-subordinated matrices."""

from .bounds import BoundReport, gordon_bound, optimal_smooth_params, order_stat_bound
from .covlab import DomainError, GaussianMatrixSpec, MatrixShape, NotPSDError, SeedSpec
from .softminmax import SmoothParams, f_value, min_sum_topk

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "DomainError",
    "GaussianMatrixSpec",
    "MatrixShape",
    "NotPSDError",
    "SeedSpec",
    "SmoothParams",
    "f_value",
    "gordon_bound",
    "min_sum_topk",
    "optimal_smooth_params",
    "order_stat_bound",
]
