"""Numerical laboratory for oscillatory integral operators with degenerate phases."""

from .errors import OscintError
from .phase import PhaseModel, detect_types, fold2, get_model, lift_2d, nondegenerate, type_lr
from .opnorm import OperatorSpec, discretize, l1_linf_norms, l2_norm

__version__ = "0.1.0"

__all__ = ["OscintError", "PhaseModel", "detect_types", "fold2", "get_model", "lift_2d",
           "nondegenerate", "type_lr", "OperatorSpec", "discretize", "l1_linf_norms", "l2_norm"]
