"""Compiled vs pure-Python SMO on kernels of increasing size.

    python benchmarks/bench_smo.py [--sizes 200 500 900] [--gamma 0.05] [--repeats 3]

Both solvers get the same precomputed kernel; the script checks that they
reach the same dual objective and iteration count before reporting timings.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from shadowmarket.detection import _smo_py
from shadowmarket.detection.svm import dual_objective, rbf_kernel

try:
    from shadowmarket.detection import _smo_ext
except ImportError:  # extension not built
    _smo_ext = None


def problem(n: int, d: int, seed: int):
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    X = rng.normal(size=(n, d)) + 0.6 * y[:, None] * (rng.random(d) < 0.3)
    return X, y


def best_of(fn, repeats: int):
    times, out = [], None
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 500, 900])
    ap.add_argument("--dims", type=int, default=18)
    ap.add_argument("--gamma", type=float, default=0.05)
    ap.add_argument("--C", type=float, default=1000.0)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if _smo_ext is None:
        print("compiled extension not built; only the Python solver is timed")
    print(f"{'n':>6} {'iters':>8} {'python s':>10} {'compiled s':>11} {'speedup':>8}")
    for n in args.sizes:
        X, y = problem(n, args.dims, args.seed)
        K = rbf_kernel(X, X, args.gamma)
        t_py, (a_py, _, it_py, _) = best_of(
            lambda: _smo_py.smo_solve(K, y, args.C, 1e-3, 10_000_000), args.repeats)
        if _smo_ext is None:
            print(f"{n:>6} {it_py:>8} {t_py:>10.4f} {'-':>11} {'-':>8}")
            continue
        t_c, (a_c, _, it_c, _) = best_of(
            lambda: _smo_ext.smo_solve(K, y, args.C, 1e-3, 10_000_000), args.repeats)
        gap = abs(dual_objective(a_py, y, K) - dual_objective(a_c, y, K))
        if it_py != it_c or gap > 1e-6 * max(1.0, abs(dual_objective(a_c, y, K))):
            raise SystemExit(f"solvers disagree at n={n}: iters {it_py}/{it_c}, gap {gap:.3g}")
        print(f"{n:>6} {it_c:>8} {t_py:>10.4f} {t_c:>11.4f} {t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
