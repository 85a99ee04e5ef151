"""Central finite-difference gradient checking."""

import numpy as np

from sentforge.autograd.tensor import Tape


def numerical_grad(f, tensor, eps=1e-5, indices=None):
    """d f() / d tensor by central differences; ``f`` returns a scalar.

    With ``indices`` (flat positions) only those entries are estimated and a
    1-D array in the same order is returned.
    """
    flat = tensor.data.reshape(-1)
    positions = range(flat.size) if indices is None else indices
    out = np.zeros(len(positions))
    for j, i in enumerate(positions):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(np.sum(f().data))
        flat[i] = orig - eps
        fm = float(np.sum(f().data))
        flat[i] = orig
        out[j] = (fp - fm) / (2.0 * eps)
    return out.reshape(tensor.shape) if indices is None else out


def analytic_grads(f, tensors):
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        out = f()
    tape.backward(out)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]


def relative_error(a, b):
    """``|a - b| / max(|a| + |b|, tiny)`` in the Euclidean norm."""
    num = np.linalg.norm(np.ravel(a) - np.ravel(b))
    den = np.linalg.norm(np.ravel(a)) + np.linalg.norm(np.ravel(b))
    return 0.0 if den == 0 else num / max(den, 1e-30)


def check_gradients(f, tensors, eps=1e-5, sample=None, rng=None):
    """Largest relative error between analytic and numerical gradients over ``tensors``.

    ``sample`` limits the check to that many randomly chosen entries per
    tensor (all entries when the tensor is smaller).
    """
    analytic = analytic_grads(f, tensors)
    if sample is not None and rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for t, a in zip(tensors, analytic):
        if sample is None or t.size <= sample:
            n = numerical_grad(f, t, eps)
            worst = max(worst, relative_error(a, n))
        else:
            idx = np.sort(rng.choice(t.size, sample, replace=False))
            n = numerical_grad(f, t, eps, idx)
            worst = max(worst, relative_error(a.reshape(-1)[idx], n))
    return worst


def _pool_gap(x, window):
    x = x[None] if x.ndim == 2 else x
    B, L, C = x.shape
    if window < 2:
        return np.inf
    Q = L // window
    w = np.sort(x[:, : Q * window].reshape(B, Q, window, C), axis=2)
    gap = w[:, :, -1] - w[:, :, -2]
    # two exact zeros are dead relu outputs; the relu inputs are checked instead
    gap = gap[(w[:, :, -1] != 0.0) | (w[:, :, -2] != 0.0)]
    return float(np.min(gap)) if gap.size else np.inf


def kink_distance(f):
    """How close one evaluation of ``f`` sits to a point where it is not smooth.

    Runs ``f`` on a tape and returns the smallest of: ``|x|`` at relu and abs
    inputs, the gap between the two largest entries of any max-pool window
    (unless both are exactly zero),
    and the vector length at squash and norm inputs.  A central difference
    with step ``eps`` is only trustworthy when this is well above ``eps``.
    """
    with Tape() as tape:
        f()
    best = np.inf
    for node in tape.nodes:
        x = node.inputs[0].data
        if node.op in ("relu", "abs") and x.size:
            best = min(best, float(np.min(np.abs(x))))
        elif node.op == "maxpool1d":
            best = min(best, _pool_gap(x, getattr(node.backward, "window", 1)))
        elif node.op in ("squash", "norm") and x.size:
            best = min(best, float(np.min(np.sqrt((x * x).sum(axis=-1)))))
    return best
