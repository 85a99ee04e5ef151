"""Initialisers, weight penalties and early stopping."""

import enum
from dataclasses import dataclass

import numpy as np

from sentforge.autograd import ops
from sentforge.autograd.tensor import Tensor
from sentforge.errors import ConfigError


@dataclass(frozen=True)
class RegularizerConfig:
    l1: float = 0.0
    l2: float = 0.0
    dropout_p: float = 0.5
    early_stop_patience: int = 0

    def __post_init__(self):
        if self.l1 < 0 or self.l2 < 0:
            raise ConfigError("l1 and l2 must be non-negative")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.early_stop_patience < 0:
            raise ConfigError("early_stop_patience must be non-negative")


def he_init(shape, fan_in, rng, name=None):
    """Trainable tensor drawn from N(0, sqrt(2 / fan_in))."""
    if fan_in < 1:
        raise ConfigError(f"fan_in must be >= 1, got {fan_in}")
    std = np.sqrt(2.0 / fan_in)
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True, name=name)


def penalty(weights, l1=0.0, l2=0.0):
    """``l1 * sum|w| + l2 * sum w^2`` over ``weights``; ``None`` when both are zero."""
    total = None
    for w in weights:
        terms = []
        if l1:
            terms.append(ops.mul(ops.sum(ops.absolute(w)), l1))
        if l2:
            terms.append(ops.mul(ops.sum(ops.square(w)), l2))
        for term in terms:
            total = term if total is None else ops.add(total, term)
    return total


class StopDecision(enum.Enum):
    CONTINUE = "continue"
    STOP = "stop"


def early_stop_check(history, patience):
    """Stop once the best loss has gone ``patience`` epochs without improving.

    With ``patience == 0`` the first non-improving epoch stops training.
    """
    if not history:
        raise ValueError("early_stop_check needs at least one recorded loss")
    best_at = int(np.argmin(history))  # first occurrence: ties are not improvements
    since = len(history) - 1 - best_at
    if since > 0 and since >= patience:
        return StopDecision.STOP
    return StopDecision.CONTINUE
