"""Recurrent cells, masked sequence runners, attention pooling and capsule routing.

Cell parameters are dicts ``{"W": [in, G*h], "U": [h, G*h], "b": [G*h]}``
with gate blocks laid out as

* LSTM: input, forget, candidate, output (``G = 4``)
* GRU: update, reset, candidate (``G = 3``)
* simple RNN: one block (``G = 1``)
"""

import numpy as np

from sentforge.autograd import ops
from sentforge.autograd.tensor import Tensor, as_tensor
from sentforge.errors import DimensionError

GATES = {"rnn": 1, "gru": 3, "lstm": 4}


def _check_cell(kind, x_shape, h_shape, params):
    W, U, b = params["W"], params["U"], params["b"]
    hid = U.shape[0]
    G = GATES[kind]
    if U.shape != (hid, G * hid) or W.shape[-1] != G * hid or b.shape != (G * hid,):
        raise DimensionError(
            f"{kind} cell: parameter shapes W{W.shape} U{U.shape} b{b.shape} inconsistent with {G} gates"
        )
    if x_shape[-1] != W.shape[0]:
        raise DimensionError(f"{kind} cell: input width {x_shape[-1]} != W rows {W.shape[0]}")
    if h_shape[-1] != hid or h_shape[:-1] != x_shape[:-1]:
        raise DimensionError(f"{kind} cell: state shape {h_shape} does not match hidden {hid} / input {x_shape}")


def _as_batch(t):
    t = as_tensor(t)
    return (ops.reshape(t, (1, t.shape[0])), True) if t.ndim == 1 else (t, False)


def _unbatch(t, squeeze):
    return ops.reshape(t, (t.shape[1],)) if squeeze else t


# ---------------------------------------------------------------- step math
# each *_step takes the input projection xw = x @ W + b already computed


def _lstm_step(xw, h_prev, c_prev, U):
    hid = U.shape[0]
    z = ops.add(xw, ops.matmul(h_prev, U))
    i = ops.sigmoid(z[:, :hid])
    f = ops.sigmoid(z[:, hid : 2 * hid])
    g = ops.tanh(z[:, 2 * hid : 3 * hid])
    o = ops.sigmoid(z[:, 3 * hid :])
    c = ops.add(ops.mul(f, c_prev), ops.mul(i, g))
    return ops.mul(o, ops.tanh(c)), c


def _gru_step(xw, h_prev, U_zr, U_n):
    hid = U_n.shape[0]
    zr = ops.sigmoid(ops.add(xw[:, : 2 * hid], ops.matmul(h_prev, U_zr)))
    z = zr[:, :hid]
    r = zr[:, hid:]
    cand = ops.tanh(ops.add(xw[:, 2 * hid :], ops.matmul(ops.mul(r, h_prev), U_n)))
    # h = (1 - z) * h_prev + z * cand
    return ops.add(h_prev, ops.mul(z, ops.sub(cand, h_prev)))


def _rnn_step(xw, h_prev, U):
    return ops.tanh(ops.add(xw, ops.matmul(h_prev, U)))


# ------------------------------------------------------------ public cells


def lstm_cell(x_t, h_prev, c_prev, params):
    """One LSTM step on ``[in]`` or ``[batch, in]`` input; returns ``(h_t, c_t)``."""
    x, squeeze = _as_batch(x_t)
    h, _ = _as_batch(h_prev)
    c, _ = _as_batch(c_prev)
    _check_cell("lstm", x.shape, h.shape, params)
    if c.shape != h.shape:
        raise DimensionError(f"lstm cell: cell state {c.shape} != hidden state {h.shape}")
    xw = ops.add(ops.matmul(x, params["W"]), params["b"])
    h_t, c_t = _lstm_step(xw, h, c, params["U"])
    return _unbatch(h_t, squeeze), _unbatch(c_t, squeeze)


def gru_cell(x_t, h_prev, params):
    x, squeeze = _as_batch(x_t)
    h, _ = _as_batch(h_prev)
    _check_cell("gru", x.shape, h.shape, params)
    U = params["U"]
    hid = U.shape[0]
    xw = ops.add(ops.matmul(x, params["W"]), params["b"])
    return _unbatch(_gru_step(xw, h, U[:, : 2 * hid], U[:, 2 * hid :]), squeeze)


def rnn_cell(x_t, h_prev, params):
    x, squeeze = _as_batch(x_t)
    h, _ = _as_batch(h_prev)
    _check_cell("rnn", x.shape, h.shape, params)
    xw = ops.add(ops.matmul(x, params["W"]), params["b"])
    return _unbatch(_rnn_step(xw, h, params["U"]), squeeze)


# --------------------------------------------------------- sequence runners


def run_sequence(kind, x, mask, params, reverse=False):
    """Run a cell over ``x`` ``[B, T, in]`` honouring ``mask`` ``[B, T]``.

    Where ``mask`` is 0 the state is carried through unchanged, so the final
    state is the state after the last real token (first real token when
    ``reverse``).  Returns ``(outputs, final)`` with ``outputs`` a list of
    ``[B, h]`` tensors in time order.
    """
    W, U, b = params["W"], params["U"], params["b"]
    B, T = x.shape[0], x.shape[1]
    hid = U.shape[0]
    _check_cell(kind, (B, x.shape[-1]), (B, hid), params)
    xw = ops.add(ops.matmul(x, W), b)  # [B, T, G*h]
    m = np.asarray(mask, dtype=np.float64)[:, :, None]
    h = Tensor(np.zeros((B, hid)))
    c = Tensor(np.zeros((B, hid)))
    if kind == "gru":
        U_zr, U_n = U[:, : 2 * hid], U[:, 2 * hid :]
    outputs = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        xt = xw[:, t, :]
        mt = m[:, t]
        if kind == "lstm":
            h_new, c_new = _lstm_step(xt, h, c, U)
            c = ops.add(c, ops.mul(mt, ops.sub(c_new, c)))
        elif kind == "gru":
            h_new = _gru_step(xt, h, U_zr, U_n)
        else:
            h_new = _rnn_step(xt, h, U)
        h = ops.add(h, ops.mul(mt, ops.sub(h_new, h)))
        outputs[t] = h
    return outputs, h


def run_bidirectional(kind, x, mask, fw, bw):
    """Forward and backward passes concatenated per timestep (``[B, T, 2h]``).

    Also returns the concatenated final states ``[B, 2h]``.
    """
    out_f, last_f = run_sequence(kind, x, mask, fw)
    out_b, last_b = run_sequence(kind, x, mask, bw, reverse=True)
    seq = ops.concat([ops.stack(out_f, axis=1), ops.stack(out_b, axis=1)], axis=2)
    return seq, ops.concat([last_f, last_b], axis=1)


# ---------------------------------------------------------------- pooling


def attention_pool(H, mask, W, b, context):
    """Additive attention over axis 1 of ``H`` ``[N, T, D]``.

    ``u = tanh(H W + b)``, ``alpha = softmax(u . context)`` over unmasked
    positions, pooled ``= sum_t alpha_t H_t``.  Returns ``(pooled, alpha)``
    with ``alpha`` a Tensor ``[N, T]``.
    """
    u = ops.tanh(ops.add(ops.matmul(H, W), b))
    scores = ops.sum(ops.mul(u, context), axis=2)
    alpha = ops.softmax(scores, axis=1, mask=mask)
    pooled = ops.sum(ops.mul(H, ops.reshape(alpha, alpha.shape + (1,))), axis=1)
    return pooled, alpha


def dynamic_routing(u_hat, iterations=3, input_mask=None):
    """Routing-by-agreement from input capsules to output capsules.

    ``u_hat`` is ``[B, I, J, d]`` (prediction of input capsule i for output j).
    Returns ``(v, couplings)`` with ``v`` ``[B, J, d]`` and ``couplings`` a list
    holding the coupling array ``[B, I, J]`` used at each iteration.
    """
    u_hat = as_tensor(u_hat)
    if iterations < 1:
        raise ValueError(f"routing needs at least one iteration, got {iterations}")
    if input_mask is not None:
        u_hat = ops.mul(u_hat, np.asarray(input_mask, dtype=np.float64)[:, :, None, None])
    B, I, J, _ = u_hat.shape
    logits = Tensor(np.zeros((B, I, J)))
    couplings = []
    v = None
    for it in range(iterations):
        c = ops.softmax(logits, axis=2)
        couplings.append(c.data.copy())
        s = ops.einsum("bij,bijd->bjd", c, u_hat)
        v = ops.squash(s, axis=-1)
        if it + 1 < iterations:
            logits = ops.add(logits, ops.einsum("bijd,bjd->bij", u_hat, v))
    return v, couplings


def sequence_mask_after_conv(mask, kernel, pool=1):
    """Validity of conv (then pool) outputs: valid if the window touches a real token."""
    mask = np.asarray(mask, dtype=bool)
    B, L = mask.shape
    P = L - kernel + 1
    conv_valid = np.zeros((B, P), dtype=bool)
    for j in range(kernel):
        conv_valid |= mask[:, j : j + P]
    if pool == 1:
        return conv_valid
    Q = P // pool
    return conv_valid[:, : Q * pool].reshape(B, Q, pool).any(axis=2)
