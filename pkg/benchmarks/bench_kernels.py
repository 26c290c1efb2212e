"""Compare the compiled kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py [n]

The compiled path matters most for the two t-SNE kernels (per-point
binary search and the O(n^2) force accumulation, both loop-bound) and for
the fused Adam update (avoids four temporaries per parameter). Matrix
products are not benchmarked here: those stay on BLAS in both paths.
"""

import sys
import time

import numpy as np

from neurosem._kernels import pyref

try:
    from neurosem._kernels import _fast
except ImportError:
    _fast = None


def bench(label, fn, repeats=5):
    fn()  # warm-up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    dt = (time.perf_counter() - t0) / repeats
    print(f"  {label:<12} {dt * 1000:10.2f} ms")
    return dt


def main(n=1000):
    rng = np.random.default_rng(0)
    print(f"n = {n} points, {'compiled kernels found' if _fast else 'NO compiled kernels'}")

    x = rng.normal(size=(n, 8))
    sq = np.ascontiguousarray(
        ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2))

    print("calibrate_bandwidths (perplexity 30):")
    t_py = bench("python", lambda: pyref.calibrate_bandwidths(sq, 30.0))
    if _fast:
        t_cy = bench("cython", lambda: _fast.calibrate_bandwidths(sq, 30.0))
        print(f"  speedup      {t_py / t_cy:10.1f} x")

    p = np.abs(rng.normal(size=(n, n)))
    p = np.ascontiguousarray((p + p.T) / p.sum() / 2)
    np.fill_diagonal(p, 0.0)
    y = np.ascontiguousarray(rng.normal(size=(n, 2)))
    print("studentt_forces:")
    t_py = bench("python", lambda: pyref.studentt_forces(p, y))
    if _fast:
        t_cy = bench("cython", lambda: _fast.studentt_forces(p, y))
        print(f"  speedup      {t_py / t_cy:10.1f} x")

    m = 1_000_000
    param = rng.normal(size=m)
    grad = rng.normal(size=m)
    mom = np.zeros(m)
    vel = np.zeros(m)
    args = (0.9, 0.99, 1e-3, 0.9, 0.999, 1e-8)
    print("adam_update (1M params):")
    t_py = bench("python", lambda: pyref.adam_update(param, grad, mom, vel, *args))
    if _fast:
        t_cy = bench("cython", lambda: _fast.adam_update(param, grad, mom, vel, *args))
        print(f"  speedup      {t_py / t_cy:10.1f} x")

    k = 64
    px = np.ascontiguousarray(rng.uniform(-0.9, 0.9, size=k))
    py_ = np.ascontiguousarray(rng.uniform(-0.9, 0.9, size=k))
    vals = np.ascontiguousarray(rng.normal(size=k))
    print("idw_grid (64 channels, 64x64):")
    t_py = bench("python", lambda: pyref.idw_grid(px, py_, vals, 64))
    if _fast:
        t_cy = bench("cython", lambda: _fast.idw_grid(px, py_, vals, 64))
        print(f"  speedup      {t_py / t_cy:10.1f} x")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 1000)
