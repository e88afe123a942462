"""Supersample information-theoretic generalization bounds from loss tensors."""

from .bounds import BOUND_NAMES, BoundReport, FastRateConstants, compute_report, optimize_constants
from .channels import bac_capacity, ternary_capacity, z_channel_capacity
from .tensor import LossTensor, MaskMatrix

__all__ = [
    "BOUND_NAMES",
    "BoundReport",
    "FastRateConstants",
    "LossTensor",
    "MaskMatrix",
    "bac_capacity",
    "compute_report",
    "optimize_constants",
    "ternary_capacity",
    "z_channel_capacity",
]
__version__ = "0.1.0"
