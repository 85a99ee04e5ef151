"""Tensor and tape for reverse-mode differentiation.

Operations record themselves onto the innermost active :class:`Tape`.
Outside of any tape nothing is recorded, which is how inference runs.

    with Tape() as tape:
        loss = ops.cross_entropy(model(x), y)
    tape.backward(loss)
"""

import threading

import numpy as np

from sentforge.errors import DimensionError

_local = threading.local()
_DEBUG = False


def set_debug(flag):
    """Check every op output for NaN/Inf (slow; for diagnosing blow-ups)."""
    global _DEBUG
    _DEBUG = bool(flag)


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Node:
    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op, inputs, output, backward):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of operations; replayed in reverse by :meth:`backward`."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, node):
        self.nodes.append(node)

    def backward(self, loss, grad=None):
        """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor requiring grad."""
        if grad is None:
            if loss.data.size != 1:
                raise DimensionError(
                    f"backward() without an explicit grad needs a scalar, got shape {loss.shape}"
                )
            grad = np.ones_like(loss.data)
        loss._accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(self.nodes):
            g = node.output.grad
            if g is None:
                continue
            in_grads = node.backward(g)
            for inp, ig in zip(node.inputs, in_grads):
                if ig is not None and inp.requires_grad:
                    inp._accumulate(ig)
        # interior grads are no longer needed; leaves keep theirs
        for node in self.nodes:
            node.output.grad = None


class SliceGrad:
    """Gradient that is zero outside ``index``; added in place on accumulation.

    Lets per-timestep slicing of a long sequence avoid materialising a
    full-size zero array for every slice.
    """

    __slots__ = ("index", "value")

    def __init__(self, index, value):
        self.index = index
        self.value = value


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if isinstance(g, SliceGrad):
            if self.grad is None:
                self.grad = np.zeros_like(self.data)
            self.grad[g.index] += g.value
            return
        if g.shape != self.data.shape:
            raise DimensionError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from sentforge.autograd import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from sentforge.autograd import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from sentforge.autograd import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from sentforge.autograd import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from sentforge.autograd import ops

        return ops.div(self, other)

    def __rtruediv__(self, other):
        from sentforge.autograd import ops

        return ops.div(other, self)

    def __neg__(self):
        from sentforge.autograd import ops

        return ops.neg(self)

    def __matmul__(self, other):
        from sentforge.autograd import ops

        return ops.matmul(self, other)

    def __getitem__(self, index):
        from sentforge.autograd import ops

        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        from sentforge.autograd import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from sentforge.autograd import ops

        return ops.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from sentforge.autograd import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def record(op, out_data, inputs, backward):
    """Wrap ``out_data`` in a Tensor and put the op on the active tape."""
    out = Tensor(out_data)
    if _DEBUG and not np.all(np.isfinite(out.data)):
        raise FloatingPointError(f"non-finite output from {op}")
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(Node(op, inputs, out, backward))
    return out
