"""SGD, Adam and Adadelta over named parameter tensors."""

from dataclasses import dataclass, field

import numpy as np

from sentforge.errors import ConfigError, TrainingError

VARIANTS = ("sgd", "adam", "adadelta")


@dataclass
class OptimizerState:
    """Optimizer hyperparameters plus per-parameter auxiliary arrays.

    ``slots`` maps parameter name to a dict of arrays shaped like that
    parameter (Adam: ``m``, ``v``; Adadelta: ``acc_grad``, ``acc_delta``).
    """

    variant: str
    learning_rate: float
    decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    rho: float = 0.95
    eps: float | None = None
    step_count: int = 0
    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        self.variant = self.variant.lower()
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown optimizer {self.variant!r}; expected one of {VARIANTS}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.decay < 0:
            raise ConfigError(f"decay must be >= 0, got {self.decay}")
        if self.eps is None:
            self.eps = 1e-6 if self.variant == "adadelta" else 1e-8

    def hyperparameters(self):
        return {
            "variant": self.variant,
            "learning_rate": self.learning_rate,
            "decay": self.decay,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "rho": self.rho,
            "eps": self.eps,
            "step_count": self.step_count,
        }

    def current_lr(self):
        # time-based decay applied per update step
        return self.learning_rate / (1.0 + self.decay * self.step_count)


def sgd(learning_rate=0.01, decay=0.0):
    return OptimizerState("sgd", learning_rate, decay)


def adam(learning_rate=0.001, decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
    return OptimizerState("adam", learning_rate, decay, beta1=beta1, beta2=beta2, eps=eps)


def adadelta(learning_rate=0.95, decay=0.0, rho=0.95, eps=1e-6):
    return OptimizerState("adadelta", learning_rate, decay, rho=rho, eps=eps)


def optimizer_step(state, params):
    """Apply one update in place to every tensor in ``params`` (name -> Tensor).

    Raises :class:`TrainingError` when a parameter has no gradient.
    """
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise TrainingError(f"no gradient for parameter(s): {', '.join(missing)}")
    lr = state.current_lr()
    state.step_count += 1
    t = state.step_count
    for name, p in params.items():
        g = p.grad
        if state.variant == "sgd":
            p.data -= lr * g
            continue
        slot = state.slots.get(name)
        if slot is None:
            if state.variant == "adam":
                slot = {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data)}
            else:
                slot = {"acc_grad": np.zeros_like(p.data), "acc_delta": np.zeros_like(p.data)}
            state.slots[name] = slot
        if state.variant == "adam":
            m, v = slot["m"], slot["v"]
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            m_hat = m / (1.0 - state.beta1**t)
            v_hat = v / (1.0 - state.beta2**t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
        else:
            acc_g, acc_d = slot["acc_grad"], slot["acc_delta"]
            acc_g *= state.rho
            acc_g += (1.0 - state.rho) * g * g
            delta = np.sqrt(acc_d + state.eps) / np.sqrt(acc_g + state.eps) * g
            p.data -= lr * delta
            acc_d *= state.rho
            acc_d += (1.0 - state.rho) * delta * delta
    return params


def zero_grad(params):
    for p in params.values():
        p.grad = None
