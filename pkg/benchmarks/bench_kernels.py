"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is warmed up once (numba compiles on first call) and then timed
as the best of N runs.
"""

import argparse
import time

import numpy as np

from sentforge import kernels


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def conv_case(rng):
    x = rng.normal(size=(32, 50, 300))
    w = rng.normal(size=(3, 300, 32))
    g = rng.normal(size=(32, 48, 32))
    return {
        "conv1d forward  [32x50x300 * 3x300x32]": (
            lambda: kernels.conv1d_forward_numpy(x, w, 1),
            lambda: kernels.conv1d_forward_numba(x, w, 1),
        ),
        "conv1d backward": (
            lambda: kernels.conv1d_backward_numpy(x, w, g, 1),
            lambda: kernels.conv1d_backward_numba(x, w, g, 1),
        ),
    }


def pool_case(rng):
    x = rng.normal(size=(32, 48, 64))
    return {
        "maxpool1d forward [32x48x64, w=2]": (
            lambda: kernels.maxpool1d_forward_numpy(x, 2),
            lambda: kernels.maxpool1d_forward_numba(x, 2),
        )
    }


def sgns_case(rng):
    V, dim, n = 2000, 100, 20000
    tokens = rng.integers(2, V, size=n).astype(np.int64)
    offsets = np.arange(0, n + 1, 20, dtype=np.int64)
    eff_win = rng.integers(1, 6, size=n).astype(np.int64)
    ptr = np.arange(V + 1, dtype=np.int64)
    comp = np.arange(V, dtype=np.int64)
    syn0 = rng.uniform(-0.005, 0.005, size=(V, dim))
    syn1 = np.zeros((V, dim))
    table = rng.integers(2, V, size=100_000).astype(np.int64)

    def run(fn):
        return lambda: fn(tokens, offsets, eff_win, ptr, comp, syn0.copy(), syn1.copy(), table, 5, 0.025, 0, n, 1)

    return {
        f"SGNS epoch [{n} tokens, dim {dim}]": (run(kernels.sgns_epoch_numpy), run(kernels.sgns_epoch_numba))
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    cases = {}
    for build in (conv_case, pool_case, sgns_case):
        cases.update(build(rng))
    print(f"{'kernel':<42} {'numpy s':>10} {'numba s':>10} {'speedup':>8}")
    for name, (np_fn, nb_fn) in cases.items():
        t_np = best_of(np_fn, args.repeat)
        t_nb = best_of(nb_fn, args.repeat)
        print(f"{name:<42} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
