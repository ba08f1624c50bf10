#!/usr/bin/env python3
"""Time the numba kernels against their numpy / pure-Python fallbacks.

    python3 benchmarks/bench_kernels.py [--nodes 1001] [--repeat 20]

The first numba call (compilation or cache load) is excluded from the timings.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from nemcell import _kernels
from nemcell.discretization import Grid, energy_hessian, linear_profile
from nemcell.qtensor import MaterialConstants


def best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=1001)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--theta", type=float, default=-8.0)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is disabled or missing; unset NEMCELL_DISABLE_NUMBA to compare")

    rng = np.random.default_rng(0)
    c = MaterialConstants.from_theta(args.theta).c_theta
    q = rng.uniform(-2.0, 2.0, (args.nodes, 3))
    p = linear_profile(Grid(args.nodes), args.theta)
    H = energy_hessian(p, 1.0, args.theta)
    D, E = H.diag, H.lower
    sigma = float(np.median(np.einsum("irr->ir", D)))

    # warm up numba (compile or load from cache)
    _kernels.bulk_fields_nb(q, args.theta, c)
    _kernels.sturm_count_nb(D, E, sigma)

    cases = [
        ("bulk_fields", lambda: _kernels.bulk_fields_py(q, args.theta, c),
         lambda: _kernels.bulk_fields_nb(q, args.theta, c), "numpy (vectorized)"),
        ("sturm_count", lambda: _kernels.sturm_count_py(D, E, sigma),
         lambda: _kernels.sturm_count_nb(D, E, sigma), "pure Python"),
    ]
    print(f"nodes={args.nodes} repeat={args.repeat}")
    print(f"{'kernel':<14}{'fallback':>22}{'fallback [ms]':>15}{'numba [ms]':>12}{'speedup':>10}")
    for name, slow, fast, label in cases:
        reps = args.repeat if name == "bulk_fields" else max(1, args.repeat // 10)
        t_slow = best_of(slow, reps)
        t_fast = best_of(fast, args.repeat)
        print(f"{name:<14}{label:>22}{1e3 * t_slow:>15.3f}{1e3 * t_fast:>12.3f}{t_slow / t_fast:>10.1f}")


if __name__ == "__main__":
    main()
