"""Reverse-mode automatic differentiation over dense numpy arrays."""

from . import ops
from .gradcheck import grad_check
from .params import ParamStore, backward
from .tensor import (
    CostRecorder,
    Graph,
    NonFiniteError,
    Tensor,
    as_tensor,
    default_dtype,
    grad,
    no_grad,
    precision,
    recording_costs,
)

__all__ = [
    "CostRecorder",
    "Graph",
    "NonFiniteError",
    "ParamStore",
    "Tensor",
    "as_tensor",
    "backward",
    "default_dtype",
    "grad",
    "grad_check",
    "no_grad",
    "ops",
    "precision",
    "recording_costs",
]
