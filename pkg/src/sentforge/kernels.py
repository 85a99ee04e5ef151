"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``SENTFORGE_DISABLE_NUMBA`` is unset (or set to ``0``).  Both
paths are always importable so the benchmark and the tests can compare
them directly: every public kernel ``foo`` has ``foo_numpy`` and, when
numba is present, ``foo_numba``.

Kernels operate on plain float64 arrays; autograd bookkeeping lives in
:mod:`sentforge.autograd`.
"""

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def decorator(func):
            return func

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return decorator


def _env_disabled():
    return os.environ.get("SENTFORGE_DISABLE_NUMBA", "").strip().lower() not in (
        "",
        "0",
        "false",
        "no",
    )


USE_NUMBA = NUMBA_AVAILABLE and not _env_disabled()

# Park-Miller minimal standard generator.  Products stay below 2**47, so
# Python ints and numba int64 agree bit for bit.
LCG_MULT = 48271
LCG_MOD = 2147483647
MAX_EXP = 30.0


def lcg_seed(seed):
    s = int(seed) % LCG_MOD
    return s if s > 0 else 1


# ---------------------------------------------------------------------------
# conv1d: x [B, L, Ci], w [k, Ci, Co] -> [B, Lo, Co], valid padding
# ---------------------------------------------------------------------------


def conv1d_forward_numpy(x, w, stride):
    k = w.shape[0]
    win = sliding_window_view(x, k, axis=1)[:, ::stride]  # [B, Lo, Ci, k]
    return np.einsum("blck,kco->blo", win, w, optimize=True)


def conv1d_backward_numpy(x, w, gout, stride):
    k = w.shape[0]
    B, L, Ci = x.shape
    Lo = gout.shape[1]
    win = sliding_window_view(x, k, axis=1)[:, ::stride]
    gw = np.einsum("blck,blo->kco", win, gout, optimize=True)
    gx = np.zeros_like(x)
    # contribution of tap j lands on input rows j, j+stride, ...
    for j in range(k):
        gx[:, j : j + stride * (Lo - 1) + 1 : stride, :] += gout @ w[j].T
    return gx, gw


@njit(cache=True)
def conv1d_forward_numba(x, w, stride):
    B, L, Ci = x.shape
    k, _, Co = w.shape
    Lo = (L - k) // stride + 1
    out = np.zeros((B, Lo, Co))
    for b in range(B):
        for t in range(Lo):
            s = t * stride
            for j in range(k):
                for c in range(Ci):
                    xv = x[b, s + j, c]
                    if xv != 0.0:
                        for o in range(Co):
                            out[b, t, o] += xv * w[j, c, o]
    return out


@njit(cache=True)
def conv1d_backward_numba(x, w, gout, stride):
    B, L, Ci = x.shape
    k, _, Co = w.shape
    Lo = gout.shape[1]
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    for b in range(B):
        for t in range(Lo):
            s = t * stride
            for j in range(k):
                for c in range(Ci):
                    xv = x[b, s + j, c]
                    acc = 0.0
                    for o in range(Co):
                        g = gout[b, t, o]
                        acc += g * w[j, c, o]
                        gw[j, c, o] += xv * g
                    gx[b, s + j, c] += acc
    return gx, gw


# ---------------------------------------------------------------------------
# maxpool1d over non-overlapping windows, ties to the lowest index
# ---------------------------------------------------------------------------


def maxpool1d_forward_numpy(x, window):
    B, L, C = x.shape
    n = L // window
    blocks = x[:, : n * window].reshape(B, n, window, C)
    arg = blocks.argmax(axis=2)  # first occurrence on ties
    out = np.take_along_axis(blocks, arg[:, :, None, :], axis=2)[:, :, 0, :]
    idx = arg + (np.arange(n) * window)[None, :, None]
    return out, idx


@njit(cache=True)
def maxpool1d_forward_numba(x, window):
    B, L, C = x.shape
    n = L // window
    out = np.empty((B, n, C))
    idx = np.empty((B, n, C), dtype=np.int64)
    for b in range(B):
        for t in range(n):
            for c in range(C):
                best = x[b, t * window, c]
                bi = t * window
                for j in range(1, window):
                    v = x[b, t * window + j, c]
                    if v > best:
                        best = v
                        bi = t * window + j
                out[b, t, c] = best
                idx[b, t, c] = bi
    return out, idx


def maxpool1d_backward(x_shape, idx, gout):
    gx = np.zeros(x_shape)
    B, n, C = idx.shape
    bi = np.arange(B)[:, None, None]
    ci = np.arange(C)[None, None, :]
    np.add.at(gx, (bi, idx, ci), gout)
    return gx


# ---------------------------------------------------------------------------
# Skip-gram negative sampling, one pass over a pre-subsampled token stream
# ---------------------------------------------------------------------------
#
# tokens/offsets: CSR sentences of vocabulary ids.
# eff_win[i]:     reduced window (1..window) drawn for centre i.
# comp_ptr/comp:  CSR rows of syn0 that make up each word's input vector
#                 (word2vec: the word row; fastText: word row + buckets).
# Returns (loss_sum, pair_count, lcg_state).


@njit(cache=True, nogil=True)
def sgns_epoch_numba(
    tokens, offsets, eff_win, comp_ptr, comp, syn0, syn1, neg_table,
    negatives, alpha0, words_before, total_words, state,
):
    dim = syn0.shape[1]
    h = np.zeros(dim)
    neu1e = np.zeros(dim)
    loss = 0.0
    pairs = 0
    table_size = neg_table.shape[0]
    n_sent = offsets.shape[0] - 1
    for s in range(n_sent):
        start = offsets[s]
        end = offsets[s + 1]
        for i in range(start, end):
            progress = (words_before + i) / total_words
            alpha = alpha0 * max(1.0 - progress, 1e-4)
            w = tokens[i]
            c0 = comp_ptr[w]
            c1 = comp_ptr[w + 1]
            inv_n = 1.0 / (c1 - c0)
            lo = max(start, i - eff_win[i])
            hi = min(end, i + eff_win[i] + 1)
            for j in range(lo, hi):
                if j == i:
                    continue
                ctx = tokens[j]
                for d in range(dim):
                    h[d] = 0.0
                    neu1e[d] = 0.0
                for r in range(c0, c1):
                    row = comp[r]
                    for d in range(dim):
                        h[d] += syn0[row, d]
                for d in range(dim):
                    h[d] *= inv_n
                for n in range(negatives + 1):
                    if n == 0:
                        target = ctx
                        label = 1.0
                    else:
                        state = (state * 48271) % 2147483647
                        target = neg_table[state % table_size]
                        if target == ctx:
                            continue
                        label = 0.0
                    f = 0.0
                    for d in range(dim):
                        f += h[d] * syn1[target, d]
                    if f > MAX_EXP:
                        f = MAX_EXP
                    elif f < -MAX_EXP:
                        f = -MAX_EXP
                    sig = 1.0 / (1.0 + np.exp(-f))
                    if label == 1.0:
                        loss -= np.log(sig)
                    else:
                        loss -= np.log(1.0 - sig)
                    g = (label - sig) * alpha
                    for d in range(dim):
                        neu1e[d] += g * syn1[target, d]
                        syn1[target, d] += g * h[d]
                for r in range(c0, c1):
                    row = comp[r]
                    for d in range(dim):
                        syn0[row, d] += neu1e[d] * inv_n
                pairs += 1
    return loss, pairs, state


def sgns_epoch_numpy(
    tokens, offsets, eff_win, comp_ptr, comp, syn0, syn1, neg_table,
    negatives, alpha0, words_before, total_words, state,
):
    loss = 0.0
    pairs = 0
    table_size = neg_table.shape[0]
    state = int(state)
    for s in range(len(offsets) - 1):
        start, end = int(offsets[s]), int(offsets[s + 1])
        for i in range(start, end):
            progress = (words_before + i) / total_words
            alpha = alpha0 * max(1.0 - progress, 1e-4)
            w = tokens[i]
            rows = comp[comp_ptr[w] : comp_ptr[w + 1]]
            inv_n = 1.0 / len(rows)
            lo = max(start, i - int(eff_win[i]))
            hi = min(end, i + int(eff_win[i]) + 1)
            for j in range(lo, hi):
                if j == i:
                    continue
                ctx = tokens[j]
                h = syn0[rows].sum(axis=0) * inv_n
                targets = [ctx]
                labels = [1.0]
                for _ in range(negatives):
                    state = (state * LCG_MULT) % LCG_MOD
                    t = neg_table[state % table_size]
                    if t != ctx:
                        targets.append(t)
                        labels.append(0.0)
                neu1e = np.zeros_like(h)
                # sequential on purpose: a repeated negative sees its own update
                for t, label in zip(targets, labels):
                    f = min(max(float(h @ syn1[t]), -MAX_EXP), MAX_EXP)
                    sig = 1.0 / (1.0 + np.exp(-f))
                    loss -= np.log(sig) if label == 1.0 else np.log(1.0 - sig)
                    g = (label - sig) * alpha
                    neu1e += g * syn1[t]
                    syn1[t] += g * h
                np.add.at(syn0, rows, neu1e * inv_n)
                pairs += 1
    return loss, pairs, state


# conv stays on the numpy path either way: einsum reaches BLAS and beats the
# numba loops at every size we train with (see benchmarks/bench_kernels.py)
conv1d_forward = conv1d_forward_numpy
conv1d_backward = conv1d_backward_numpy
if NUMBA_AVAILABLE and USE_NUMBA:
    maxpool1d_forward = maxpool1d_forward_numba
    sgns_epoch = sgns_epoch_numba
else:
    maxpool1d_forward = maxpool1d_forward_numpy
    sgns_epoch = sgns_epoch_numpy


def backend():
    return "numba" if (NUMBA_AVAILABLE and USE_NUMBA) else "numpy"
