#!/usr/bin/env python3
"""Time the numba and numpy flavors of each hot kernel side by side.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Numba functions are called once before timing so JIT compilation is not
counted. Results are medians over the repeat count.
"""

import argparse
import statistics
import time

import numpy as np

from gbot import kernels


def _time(fn, args, repeats):
    fn(*args)  # warm up (JIT compile for the numba flavor)
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        samples.append((time.perf_counter() - t0) * 1e6)
    return statistics.median(samples)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows = []

    # Reprojection residual + Jacobian: the per-frame Gauss-Newton workhorse.
    for n in (17, 68, 136):  # one object, a 4-object module, an 8-object module
        points = rng.uniform(-0.06, 0.06, size=(n, 3))
        uv = rng.uniform(0, 1280, size=(n, 2))
        weights = rng.uniform(0.1, 1.0, size=n)
        rot = np.eye(3)
        trans = np.array([0.0, 0.0, 0.8])
        call = (points, uv, weights, rot, trans, 600.0, 600.0, 640.0, 360.0)
        rows.append((f"reproj_residual_jacobian n={n}", call,
                     kernels.reproj_residual_jacobian_numpy,
                     getattr(kernels, "reproj_residual_jacobian_numba", None)))

    # ADD-S closest-point distance: the evaluation workhorse.
    for n in (62, 200):
        a = rng.normal(size=(n, 3))
        b = rng.normal(size=(n, 3))
        rows.append((f"adds_min_mean n={n}", (a, b),
                     kernels.adds_min_mean_numpy,
                     getattr(kernels, "adds_min_mean_numba", None)))

    # Farthest point sampling: model preprocessing.
    for n in (62, 500):
        pts = rng.normal(size=(n, 3))
        rows.append((f"fps n={n} k=17", (pts, 17, 0),
                     kernels.fps_numpy,
                     getattr(kernels, "fps_numba", None)))

    print(f"active backend: {kernels.ACTIVE_BACKEND}  (median of {args.repeats} runs, microseconds)")
    print(f"{'kernel':38s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name, call, f_np, f_nb in rows:
        t_np = _time(f_np, call, args.repeats)
        if f_nb is None:
            print(f"{name:38s} {t_np:10.1f} {'n/a':>10s} {'n/a':>8s}")
            continue
        t_nb = _time(f_nb, call, args.repeats)
        print(f"{name:38s} {t_np:10.1f} {t_nb:10.1f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
