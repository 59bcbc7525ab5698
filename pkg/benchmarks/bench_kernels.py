"""Timing comparison of the compiled and pure-Python reduction kernels.

Runs each kernel on a few sizes for every available backend, then a
small end-to-end projection per backend, and prints a table of best-of
wall times.  The two backends compute bit-identical results; this script
measures what the compiled path buys.

Usage: python benchmarks/bench_kernels.py [--sizes 1024,65536] [--repeats 5]
"""

import argparse
import time

import numpy as np

from iproj import kernels
from iproj.constraints import moment_inequality
from iproj.engine import EngineOptions, Problem, run
from iproj.measure import DensityVector, GridSpec, uniform_measure


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(n, rng):
    y = rng.normal(size=n)
    m = rng.random(n) + 1e-3
    p = rng.random(n)
    p /= p.sum()
    q = rng.random(n) + 1e-3
    q /= q.sum()
    vals = rng.normal(size=n)
    w = rng.random(n) + 1e-3
    return {
        "kahan_sum": lambda: kernels.kahan_sum(y),
        "weighted_sum": lambda: kernels.weighted_sum(y, m),
        "kl_sum": lambda: kernels.kl_sum(p, q),
        "logsumexp": lambda: kernels.logsumexp_weighted(y, m),
        "tilted_moments": lambda: kernels.tilted_moments(y, m, 0.7),
        "pava": lambda: kernels.pava(vals, w),
    }


def end_to_end(n):
    grid = GridSpec(shape=(n,), domain=((0.0, 1.0),))
    q = uniform_measure(grid)
    x = grid.axis_nodes("x")
    cons = (
        moment_inequality(DensityVector(grid, x - 0.7)),
        moment_inequality(DensityVector(grid, x * x - 0.7)),
    )
    problem = Problem(base=q, constraints=cons)
    run(problem, EngineOptions(max_cycles=40))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="4096,65536",
                    help="comma-separated kernel input sizes")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}")

    rows = []
    for n in sizes:
        rng = np.random.default_rng(7)
        cases = kernel_cases(n, rng)
        for name, fn in cases.items():
            timings = {}
            for b in backends:
                kernels.use_backend(b)
                timings[b] = best_of(fn, args.repeats)
            rows.append((f"{name}[{n}]", timings))

    for b in backends:
        kernels.use_backend(b)
        rows.append(("engine[4096, 40 cycles]",
                     {b: best_of(lambda: end_to_end(4096), max(1, args.repeats // 2))}))
    kernels.use_backend("auto")

    width = max(len(r[0]) for r in rows) + 2
    header = "case".ljust(width) + "".join(b.rjust(14) for b in backends) + "   speedup"
    print(header)
    print("-" * len(header))
    merged = {}
    for name, timings in rows:
        merged.setdefault(name, {}).update(timings)
    for name, timings in merged.items():
        cells = "".join(
            (f"{timings[b] * 1e6:12.1f}us" if b in timings else " " * 14)
            for b in backends
        )
        if len(timings) == len(backends) and "cython" in timings and "python" in timings:
            ratio = timings["python"] / timings["cython"]
            cells += f"   {ratio:6.2f}x"
        print(name.ljust(width) + cells)


if __name__ == "__main__":
    main()
