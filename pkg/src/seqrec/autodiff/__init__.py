"""Minimal dense-array core with reverse-mode differentiation and Adam."""
from .tensor import (
    PRIMITIVES, NonFiniteError, Tape, TapeError, Tensor, apply_primitive, as_tensor, backward,
)
from . import tensor as ops
from .optim import Adam, AdamState, adam_step
from .gradcheck import grad_check, grad_check_params
from .nn import gru_cell, gru_params

__all__ = [
    "PRIMITIVES", "NonFiniteError", "Tape", "TapeError", "Tensor", "apply_primitive",
    "as_tensor", "backward", "ops", "Adam", "AdamState", "adam_step", "grad_check",
    "grad_check_params", "gru_cell", "gru_params",
]
