"""Timing comparison of the compiled kernel core against the numpy fallback.

Builds a 2-D kernel-discretized space, then times the hot paths (fused row
sums, residual assembly, pair integrals and full resolvent solves) under
both backends.  Run:

    python benchmarks/bench_kernels.py [--grid 64] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mrws import (
    EllipticProblem,
    Field,
    GridSpec,
    _core,
    build_kernel_space,
    m_boundary,
    make_plaplacian,
    pair_integral,
    solve_resolvent,
)
from mrws._assembly import ClosureSystem


def build_instance(grid_side: int):
    grid = GridSpec(dim=2, shape=(grid_side, grid_side), h=1.0)
    space = build_kernel_space(grid, lambda r: np.where(r <= 2.5, 1.0, 0.0), 2.5)
    n = space.node_count
    # working set: the inner square
    nodes = np.arange(n).reshape(grid_side, grid_side)
    omega = nodes[2:-2, 2:-2].ravel()
    domain = m_boundary(space, omega)
    return space, domain


def time_call(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--grid", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    space, domain = build_instance(args.grid)
    rng = np.random.default_rng(0)
    map_ = make_plaplacian(3.0)
    cs = ClosureSystem(space, domain)
    u = rng.standard_normal(cs.size)
    z = Field(domain.omega, rng.uniform(-1, 1, domain.omega.size))
    flux = Field.constant(domain.boundary, 0.1)
    problem = EllipticProblem(
        space=space, domain=domain, map=map_, variant="gl", lam=0.5, z=z, flux=flux
    )
    dense = np.full(space.node_count, np.nan)
    dense[domain.closure] = u

    workloads = {
        "row_sums (fused)": lambda: cs.row_sums(map_, u, "gl"),
        "jacobian assembly": lambda: cs.row_sums_jacobian(map_, u, "gl"),
        "pair_integral |du|^p": lambda: pair_integral(
            space, domain, "Q1", lambda xs, ys: np.abs(dense[ys] - dense[xs]) ** 3
        ),
        "resolvent solve": lambda: solve_resolvent(problem),
    }

    print(f"grid {args.grid}x{args.grid}: {space.node_count} nodes, "
          f"{space.row_idx.size} stored entries, closure {cs.size}")
    available = _core.available_backends()
    print(f"backends: {available}\n")
    header = f"{'workload':<24}" + "".join(f"{b:>14}" for b in available)
    if len(available) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, fn in workloads.items():
        times = []
        for backend in available:
            _core.set_backend(backend)
            times.append(time_call(fn, args.repeats))
        row = f"{name:<24}" + "".join(f"{t * 1e3:>12.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[1] / times[0]:>9.2f}x"
        print(row)
    _core.set_backend(available[0])


if __name__ == "__main__":
    main()
