"""The numba kernels and their numpy fallbacks must agree."""

import subprocess
import sys

import numpy as np
import pytest

from sentforge import kernels

pytestmark = pytest.mark.skipif(not kernels.NUMBA_AVAILABLE, reason="numba not installed")


@pytest.mark.parametrize("stride", [1, 2, 3])
def test_conv1d_paths_agree(stride):
    rng = np.random.default_rng(stride)
    x = rng.normal(size=(3, 11, 4))
    w = rng.normal(size=(3, 4, 5))
    out_np = kernels.conv1d_forward_numpy(x, w, stride)
    out_nb = kernels.conv1d_forward_numba(x, w, stride)
    np.testing.assert_allclose(out_nb, out_np, rtol=1e-12, atol=1e-12)
    g = rng.normal(size=out_np.shape)
    for a, b in zip(kernels.conv1d_backward_numpy(x, w, g, stride), kernels.conv1d_backward_numba(x, w, g, stride)):
        np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-12)


def test_maxpool_paths_agree_including_ties():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 3, size=(2, 9, 3)).astype(float)  # many ties
    out_np, idx_np = kernels.maxpool1d_forward_numpy(x, 2)
    out_nb, idx_nb = kernels.maxpool1d_forward_numba(x, 2)
    np.testing.assert_array_equal(out_np, out_nb)
    np.testing.assert_array_equal(idx_np, idx_nb)


def _sgns_inputs(seed):
    rng = np.random.default_rng(seed)
    V, dim, buckets = 12, 6, 7
    tokens = rng.integers(2, V, size=40).astype(np.int64)
    offsets = np.array([0, 13, 27, 40], dtype=np.int64)
    eff_win = rng.integers(1, 4, size=40).astype(np.int64)
    # each word: its own row plus two hashed rows (one duplicate to exercise repeated rows)
    ptr, comp = [0], []
    for w in range(V):
        comp += [w, V + (w % buckets), V + ((3 * w) % buckets)]
        ptr.append(len(comp))
    syn0 = rng.uniform(-0.1, 0.1, size=(V + buckets, dim))
    syn1 = rng.uniform(-0.1, 0.1, size=(V, dim))
    table = rng.integers(2, V, size=1000).astype(np.int64)
    return tokens, offsets, eff_win, np.array(ptr, np.int64), np.array(comp, np.int64), syn0, syn1, table


@pytest.mark.parametrize("seed", range(3))
def test_sgns_paths_agree(seed):
    tokens, offsets, eff_win, ptr, comp, syn0, syn1, table = _sgns_inputs(seed)
    a0, a1 = syn0.copy(), syn1.copy()
    b0, b1 = syn0.copy(), syn1.copy()
    state = kernels.lcg_seed(seed)
    la, pa, sa = kernels.sgns_epoch_numpy(tokens, offsets, eff_win, ptr, comp, a0, a1, table, 5, 0.05, 0, 80, state)
    lb, pb, sb = kernels.sgns_epoch_numba(tokens, offsets, eff_win, ptr, comp, b0, b1, table, 5, 0.05, 0, 80, state)
    assert (pa, int(sa)) == (pb, int(sb))
    assert la == pytest.approx(lb, rel=1e-10)
    np.testing.assert_allclose(b0, a0, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(b1, a1, rtol=1e-10, atol=1e-12)


def test_env_flag_selects_numpy_backend():
    code = "from sentforge import kernels; print(kernels.backend())"
    env_off = {"SENTFORGE_DISABLE_NUMBA": "1", "PATH": ""}
    out = subprocess.run([sys.executable, "-c", code], env=env_off, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    out = subprocess.run([sys.executable, "-c", code], env={"PATH": ""}, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"
