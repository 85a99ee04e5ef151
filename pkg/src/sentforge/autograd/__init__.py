"""Minimal reverse-mode autodiff over float64 numpy arrays."""

from sentforge.autograd import ops
from sentforge.autograd.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from sentforge.autograd.optim import (
    OptimizerState,
    adadelta,
    adam,
    optimizer_step,
    sgd,
    zero_grad,
)
from sentforge.autograd.regularize import (
    RegularizerConfig,
    StopDecision,
    early_stop_check,
    he_init,
    penalty,
)
from sentforge.autograd.tensor import Tape, Tensor, as_tensor, set_debug

__all__ = [
    "Checkpoint",
    "OptimizerState",
    "RegularizerConfig",
    "StopDecision",
    "Tape",
    "Tensor",
    "adadelta",
    "adam",
    "as_tensor",
    "early_stop_check",
    "he_init",
    "load_checkpoint",
    "ops",
    "optimizer_step",
    "penalty",
    "save_checkpoint",
    "set_debug",
    "sgd",
    "zero_grad",
]
