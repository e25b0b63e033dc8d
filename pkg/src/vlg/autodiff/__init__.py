"""Minimal dense reverse-mode autodiff on numpy arrays."""

from .gradcheck import grad_check, numeric_grad
from .ops import *  # noqa: F401,F403
from .ops import __all__ as _ops_all
from .optim import AdamWState, adamw_step, clip_grad_norm, global_norm
from .tensor import Tape, Tensor, active_tape, tensor

__all__ = ["Tape", "Tensor", "active_tape", "tensor", "grad_check", "numeric_grad",
           "AdamWState", "adamw_step", "clip_grad_norm", "global_norm", *_ops_all]
