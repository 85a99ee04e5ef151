"""Differentiable operations on :class:`~sentforge.autograd.tensor.Tensor`.

Every function accepts Tensors or array-likes and returns a Tensor.  Each
backward closure maps the output gradient to one gradient per input
(``None`` where an input is a constant).
"""

import numpy as np
from scipy.special import expit

from sentforge import kernels
from sentforge.autograd.tensor import SliceGrad, Tensor, as_tensor, record
from sentforge.errors import (
    ConfigError,
    DimensionError,
    LabelError,
    PoolingError,
    SequenceTooShortError,
)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(
            f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible"
        ) from None


# ---------------------------------------------------------------- arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return record("add", a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return record("sub", a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return record("mul", a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return record("div", a.data / b.data, (a, b), backward)


def neg(a):
    a = as_tensor(a)
    return record("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a, b):
    """Matrix product over the last two axes (leading axes broadcast)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return record("matmul", a.data @ b.data, (a, b), backward)


# ------------------------------------------------------------- elementwise


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return record("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x):
    x = as_tensor(x)
    y = expit(x.data)
    return record("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x):
    x = as_tensor(x)
    return record("relu", np.maximum(x.data, 0.0), (x,), lambda g: (g * (x.data > 0),))


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.data)
    return record("exp", y, (x,), lambda g: (g * y,))


def log(x):
    x = as_tensor(x)
    return record("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def absolute(x):
    x = as_tensor(x)
    return record("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def square(x):
    x = as_tensor(x)
    return record("square", x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
    "exp": exp,
    "log": log,
    "abs": absolute,
}


def elementwise(op, *args):
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# -------------------------------------------------------------- reductions


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    x = as_tensor(x)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return record("sum", x.data.sum(axis=axis, keepdims=keepdims), (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


# ------------------------------------------------------------------ shapes


def reshape(x, shape):
    x = as_tensor(x)
    return record("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None):
    x = as_tensor(x)
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inv = np.argsort(axes)
    return record("transpose", x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def _is_basic_index(index):
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, np.integer)) or i is None or i is Ellipsis for i in items)


def getitem(x, index):
    x = as_tensor(x)
    basic = _is_basic_index(index)

    def backward(g):
        if basic:
            return (SliceGrad(index, g),)
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return record("getitem", x.data[index], (x,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"concat: {e}") from None

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return record("concat", out, tuple(tensors), backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise DimensionError(f"stack: {e}") from None

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return record("stack", out, tuple(tensors), backward)


def pad(x, pad_width):
    """Zero padding; ``pad_width`` as for :func:`numpy.pad`."""
    x = as_tensor(x)
    pw = [tuple(p) for p in pad_width]
    region = tuple(slice(lo, lo + n) for (lo, _), n in zip(pw, x.shape))
    return record("pad", np.pad(x.data, pw), (x,), lambda g: (g[region],))


def embedding(table, ids):
    """Row lookup ``table[ids]``; gradient scatter-adds into the table."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return record("embedding", table.data[ids], (table,), backward)


def einsum(subscripts, a, b):
    """Two-operand :func:`numpy.einsum` with explicit output, e.g. ``"bij,bije->bje"``.

    Every index of each operand must also occur in the other operand or in
    the output, so each gradient is itself a two-operand einsum.
    """
    a, b = as_tensor(a), as_tensor(b)
    try:
        ins, out_sub = subscripts.replace(" ", "").split("->")
        a_sub, b_sub = ins.split(",")
    except ValueError:
        raise ValueError(f"einsum: expected 'ab,bc->ac' form, got {subscripts!r}") from None
    for mine, other in ((a_sub, b_sub), (b_sub, a_sub)):
        if len(set(mine)) != len(mine) or not set(mine) <= set(other) | set(out_sub):
            raise ValueError(f"einsum: unsupported subscripts {subscripts!r}")
    try:
        out = np.einsum(subscripts, a.data, b.data, optimize=True)
    except ValueError as e:
        raise DimensionError(f"einsum {subscripts}: {e}") from None

    def backward(g):
        ga = np.einsum(f"{out_sub},{b_sub}->{a_sub}", g, b.data, optimize=True)
        gb = np.einsum(f"{out_sub},{a_sub}->{b_sub}", g, a.data, optimize=True)
        return ga, gb

    return record("einsum", out, (a, b), backward)


# ---------------------------------------------------------------- softmax


def softmax(x, axis=-1, mask=None):
    """Softmax along ``axis``.  Positions where ``mask`` is 0 get weight 0.

    A slice that is masked out entirely is all zeros.
    """
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        keep = np.asarray(mask) > 0
        z = np.where(keep, z, -1e30)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    if mask is not None:
        y = y * keep

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return record("softmax", y, (x,), backward)


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse
    p = np.exp(y)

    def backward(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return record("log_softmax", y, (x,), backward)


# ------------------------------------------------------- conv and pooling


def conv1d(x, kernels_, stride=1):
    """Valid cross-correlation along the sequence axis.

    ``x`` is ``[L, c_in]`` or ``[B, L, c_in]``; ``kernels_`` is ``[k, c_in, c_out]``.
    """
    x, w = as_tensor(x), as_tensor(kernels_)
    if w.ndim != 3 or x.ndim not in (2, 3) or x.shape[-1] != w.shape[1]:
        raise DimensionError(f"conv1d: input {x.shape} incompatible with kernels {w.shape}")
    if stride < 1:
        raise ConfigError(f"conv1d: stride must be >= 1, got {stride}")
    k = w.shape[0]
    L = x.shape[-2]
    if L < k:
        raise SequenceTooShortError(f"conv1d: sequence length {L} shorter than kernel {k}")
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    xd = np.ascontiguousarray(xd)
    out = kernels.conv1d_forward(xd, np.ascontiguousarray(w.data), stride)

    def backward(g):
        g3 = g[None] if squeeze else g
        gx, gw = kernels.conv1d_backward(xd, w.data, np.ascontiguousarray(g3), stride)
        return (gx[0] if squeeze else gx), gw

    return record("conv1d", out[0] if squeeze else out, (x, w), backward)


def maxpool1d(x, window):
    """Max over non-overlapping windows along the sequence axis; ties go to the first index."""
    x = as_tensor(x)
    if window < 1:
        raise PoolingError(f"maxpool1d: window must be >= 1, got {window}")
    L = x.shape[-2]
    if window > L:
        raise PoolingError(f"maxpool1d: window {window} larger than sequence length {L}")
    squeeze = x.ndim == 2
    xd = np.ascontiguousarray(x.data[None] if squeeze else x.data)
    out, idx = kernels.maxpool1d_forward(xd, window)

    def backward(g):
        g3 = g[None] if squeeze else g
        gx = kernels.maxpool1d_backward(xd.shape, idx, g3)
        return (gx[0] if squeeze else gx,)

    backward.window = window  # read by gradcheck.kink_distance
    return record("maxpool1d", out[0] if squeeze else out, (x,), backward)


def dropout(x, p, training, rng=None):
    """Inverted dropout: survivors are scaled by ``1/(1-p)``; identity in eval mode."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return record("dropout", x.data * keep, (x,), lambda g: (g * keep,))


# ------------------------------------------------------------------ losses


def _check_one_hot(targets, shape):
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != shape:
        raise LabelError(f"targets shape {t.shape} does not match predictions {shape}")
    if not (np.all((t == 0) | (t == 1)) and np.all(t.sum(axis=-1) == 1)):
        raise LabelError("targets must be one-hot rows")
    return t


def cross_entropy(logits, targets, sample_weights=None):
    """Mean over the batch of ``-log softmax(logits)[target]``."""
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects [n, classes] logits, got {logits.shape}")
    t = _check_one_hot(targets, logits.shape)
    n = logits.shape[0]
    w = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = -(w * (t * logp).sum(axis=1)).sum() / n

    def backward(g):
        p = np.exp(logp)
        return (g * (p - t) * w[:, None] / n,)

    return record("cross_entropy", np.array(loss), (logits,), backward)


def margin_loss(norms, targets, m_plus=0.8, m_minus=0.2, lam=0.5, sample_weights=None):
    """Capsule margin loss, summed over classes and averaged over the batch."""
    norms = as_tensor(norms)
    t = _check_one_hot(targets, norms.shape)
    present = mul(square(relu(sub(m_plus, norms))), t)
    absent = mul(square(relu(sub(norms, m_minus))), lam * (1.0 - t))
    per_sample = sum(add(present, absent), axis=1)
    if sample_weights is not None:
        per_sample = mul(per_sample, np.asarray(sample_weights, dtype=np.float64))
    return mean(per_sample)


# ---------------------------------------------------------------- capsules


def squash(s, axis=-1):
    """``s * |s| / (1 + |s|^2)``; maps into the open unit ball, zero stays zero."""
    s = as_tensor(s)
    n = np.sqrt((s.data * s.data).sum(axis=axis, keepdims=True))
    scale = n / (1.0 + n * n)
    y = s.data * scale

    def backward(g):
        # v = s * f(|s|) with f(n) = n/(1+n^2); radial part is n * f'(n)
        safe = np.where(n > 0, n, 1.0)
        u = np.where(n > 0, s.data / safe, 0.0)
        radial = n * (1.0 - n * n) / (1.0 + n * n) ** 2
        return (scale * g + radial * (g * u).sum(axis=axis, keepdims=True) * u,)

    return record("squash", y, (s,), backward)


def norm(x, axis=-1):
    """Euclidean norm along ``axis``; the gradient at zero is taken as zero."""
    x = as_tensor(x)
    n = np.sqrt((x.data * x.data).sum(axis=axis))

    def backward(g):
        ne = np.expand_dims(n, axis)
        safe = np.where(ne > 0, ne, 1.0)
        return (np.expand_dims(g, axis) * np.where(ne > 0, x.data / safe, 0.0),)

    return record("norm", n, (x,), backward)


__all__ = [
    "Tensor",
    "absolute",
    "add",
    "concat",
    "conv1d",
    "cross_entropy",
    "div",
    "dropout",
    "elementwise",
    "embedding",
    "exp",
    "getitem",
    "log",
    "log_softmax",
    "margin_loss",
    "matmul",
    "maxpool1d",
    "mean",
    "mul",
    "neg",
    "norm",
    "pad",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "square",
    "squash",
    "stack",
    "sub",
    "sum",
    "tanh",
    "transpose",
]
