"""Compare the compiled kernels with the NumPy/SciPy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--grid 201] [--steps 2000] [--repeat 3]

Times one period of the linear map, its transpose, and one period of the
nonlinear stepper on the fixed-column preset, for each backend, and checks
that both give the same answer.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from phytocolumn import _kernels_py
from phytocolumn.config import preset
from phytocolumn.discretize import Grid
from phytocolumn.timestep import PeriodPlan, initial_profile

try:
    from phytocolumn import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def _best(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(grid_n=201, steps=2000, repeat=3):
    params = preset("example-4.1b").params
    grid = Grid(grid_n, params.L0)
    plan = PeriodPlan(params, grid, steps)
    e1, e2 = plan.eigen_factors(1.0)
    z0 = initial_profile(grid).values
    m = plan.z_to_v
    backends = [("python", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    results = {}
    for name, k in backends:
        def linear():
            z = np.array(z0)
            k.linear_period(z, *plan.transport, e1, e2)
            return z

        def adjoint():
            z = np.array(z0)
            k.linear_period_adjoint(z, *plan.transport, e1, e2)
            return z

        def nonlinear():
            z = np.array(z0)
            snaps = np.empty((1, grid.N))
            k.nonlinear_period(z, *plan.transport, plan.base, plan.ilin, m, plan.shade,
                               params.growth.a, params.growth.b, grid.h, plan.dt,
                               snaps, steps, np.empty(2))
            return z

        results[name] = {label: _best(fn, repeat)
                         for label, fn in (("linear", linear), ("adjoint", adjoint),
                                           ("nonlinear", nonlinear))}

    print(f"one period, N={grid_n}, {steps} steps (best of {repeat})")
    print(f"{'kernel':<10} " + " ".join(f"{n:>12}" for n in results) + "     speedup  max rel diff")
    for label in ("linear", "adjoint", "nonlinear"):
        times = [results[n][label][0] for n in results]
        row = f"{label:<10} " + " ".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) == 2:
            a, b = (results[n][label][1] for n in results)
            diff = np.max(np.abs(a - b)) / np.max(np.abs(a))
            row += f"  {times[0] / times[1]:>9.1f}x  {diff:.2e}"
        print(row)
    return results


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=201)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    run(a.grid, a.steps, a.repeat)
