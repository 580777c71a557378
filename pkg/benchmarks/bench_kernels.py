#!/usr/bin/env python3
"""Benchmark the numba-jitted kernels against the pure-numpy fallbacks.

Runs each hot kernel on both paths (when numba is importable) and prints a
timing table.  The same selection happens package-wide at import time via
the PERFQUANT_DISABLE_NUMBA environment variable; this script imports both
implementations directly so one process can compare them.

Usage:  python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from perfquant import _kernels
from perfquant._accel import HAVE_NUMBA, NUMBA_ENABLED
from perfquant.gbt import GbtClassifier, GbtParams

if HAVE_NUMBA:
    # compile locally so the comparison works even when the package-wide
    # path was forced to numpy via PERFQUANT_DISABLE_NUMBA
    from numba import njit

    response_fill_jit = njit(cache=True)(_kernels._response_fill)
    rk4_jit = njit(cache=True)(_kernels._rk4_offsets)
    scan_jit = njit(cache=True)(_kernels._scan_split)


def timeit(fn, repeat):
    fn()  # warm-up (and JIT compilation for the numba path)
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_response(repeat):
    t = np.arange(3001) * 0.1
    out = np.empty_like(t)
    args = (15.0, 1.2, 80.0, 250.0, 10.0, 5.0)

    def run_numpy():
        for _ in range(200):
            _kernels.response_curve_numpy(*args, t)

    def run_numba():
        for _ in range(200):
            response_fill_jit(*args, t, out)

    return ("response curve (200 x 3001 pts)", run_numpy, run_numba, repeat)


def bench_rk4(repeat):
    offsets = np.linspace(0.5, 290.0, 50)

    def run_numpy():
        _kernels.rk4_offsets_numpy(5.0, 1.2, 80.0, 250.0, offsets, 5.0 / 1000)

    def run_numba():
        rk4_jit(5.0, 1.2, 80.0, 250.0, offsets, 5.0 / 1000)

    return ("fixed-step integrator (58k steps)", run_numpy, run_numba, repeat)


def bench_split_scan(repeat):
    rng = np.random.default_rng(0)
    vals = np.sort(rng.normal(size=400))
    grad = rng.normal(size=400)
    hess = rng.uniform(0.01, 0.25, size=400)

    def run_numpy():
        for _ in range(1000):
            _kernels.scan_split_numpy(vals, grad, hess, 1.0, 1)

    def run_numba():
        for _ in range(1000):
            scan_jit(vals, grad, hess, 1.0, 1)

    return ("split scan (1000 x 400 samples)", run_numpy, run_numba, repeat)


def bench_gbt_training(repeat):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(300, 12))
    y = ["cancer" if v > 0 else "benign" for v in X[:, 4]]
    params = GbtParams(n_rounds=50, max_depth=3)

    def run():
        GbtClassifier.train(X, y, params)

    # training uses whichever scan kernel is active package-wide
    label = ("boosted-tree training (50 rounds, active path: "
             + ("numba" if NUMBA_ENABLED else "numpy") + ")")
    return (label, run, None, repeat)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    if not HAVE_NUMBA:
        print("numba not importable: only the numpy path is measured")

    rows = []
    for name, numpy_fn, numba_fn, repeat in (
            bench_response(args.repeat), bench_rk4(args.repeat),
            bench_split_scan(args.repeat), bench_gbt_training(args.repeat)):
        t_numpy = timeit(numpy_fn, repeat)
        jit_fn = numba_fn if (numba_fn is not None and HAVE_NUMBA) else None
        t_numba = timeit(jit_fn, repeat) if jit_fn is not None else None
        rows.append((name, t_numpy, t_numba))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  {'speed-up':>8}")
    for name, t_numpy, t_numba in rows:
        if t_numba is None:
            print(f"{name:<{width}}  {t_numpy * 1e3:>8.2f}ms  {'-':>10}  {'-':>8}")
        else:
            print(f"{name:<{width}}  {t_numpy * 1e3:>8.2f}ms  "
                  f"{t_numba * 1e3:>8.2f}ms  {t_numpy / t_numba:>7.1f}x")


if __name__ == "__main__":
    main()
