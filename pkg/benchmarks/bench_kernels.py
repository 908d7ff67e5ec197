"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--points 200000] [--repeats 5] [--solve]

Kernel timings call both implementations in-process. ``--solve`` also times
a full benchmark solve in two subprocesses, one with QUASIREG_DISABLE_NUMBA=1.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from quasireg import kernels, rng
from quasireg.mindex import build


def best_of(fn, repeats):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(points):
    g = np.random.default_rng(0)
    cases = []
    for dim, kind, deg in [(1, "full", 100), (2, "hyperbolic", 19), (2, "total", 20), (3, "total", 6)]:
        idx = np.ascontiguousarray(build(dim, kind, deg=deg).indices, dtype=np.int64)
        kmax = np.ascontiguousarray(idx.max(axis=0), dtype=np.int64)
        U = g.random((points, dim))
        S = g.normal(size=points)
        c = g.normal(size=len(idx))
        label = f"d={dim} {kind} {deg} (#Gamma={len(idx)})"
        cases.append((f"project  {label}", lambda U=U, S=S, idx=idx, kmax=kmax: kernels._project_numba(U, S, idx, kmax),
                      lambda U=U, S=S, idx=idx, kmax=kmax: kernels._project_numpy(U, S, idx, kmax)))
        if dim == 1:  # the solver routes full 1-D sets through the Clenshaw kernel
            fast = lambda U=U, c=c: kernels._series_1d_numba(np.ascontiguousarray(U[:, 0]), c)
        else:
            fast = lambda U=U, c=c, idx=idx, kmax=kmax: kernels._series_numba(U, idx, kmax, c)
        cases.append((f"series   {label}", fast,
                      lambda U=U, c=c, idx=idx, kmax=kmax: kernels._series_numpy(U, idx, kmax, c)))
    p = g.random(points * 4)
    cases.append((f"uniforms {points}x4", lambda: rng._stream_uniforms_numba(1, 0, 0, 0, points, 0, 4),
                  lambda: rng._stream_uniforms_numpy(1, 0, 0, 0, points, 0, 4)))
    cases.append((f"ndtri    {p.size}", lambda: rng._ndtri_numba(p), lambda: rng._ndtri_numpy(p)))
    return cases


SOLVE = ("python", "-m", "quasireg", "bench", "--dim", "1", "--kind", "full", "--deg", "100",
         "--steps", "20", "--paths", "20000", "--seed", "1")


def time_solve(disable):
    env = dict(os.environ, QUASIREG_DISABLE_NUMBA="1" if disable else "0")
    cmd = [sys.executable, *SOLVE[1:]]
    subprocess.run(cmd, env=env, capture_output=True, check=True)  # warm cache
    t0 = time.perf_counter()
    subprocess.run(cmd, env=env, capture_output=True, check=True)
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=200_000)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--solve", action="store_true", help="also time an end-to-end solve per backend")
    args = ap.parse_args()

    print(f"{'kernel':44s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speed-up':>9s}")
    for name, fast, slow in kernel_cases(args.points):
        a, b = best_of(fast, args.repeats), best_of(slow, args.repeats)
        print(f"{name:44s} {a:10.4f} {b:10.4f} {b / a:8.1f}x")
    if args.solve:
        a, b = time_solve(False), time_solve(True)
        print(f"{'solve d=1 K=100 N=20 M=2e4 (process)':44s} {a:10.2f} {b:10.2f} {b / a:8.1f}x")


if __name__ == "__main__":
    main()
