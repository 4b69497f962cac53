"""Time the compiled search kernels against their pure-Python twins.

Micro-benchmarks call both implementations directly in-process; the
end-to-end rows run a solver in a child process per implementation,
since kernel selection happens at import time. Outputs one table with
the best-of-N wall time per row.

Usage: python3 benchmarks/compare_kernels.py [--repeats N] [--no-e2e]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from gridlock.solvers import _kernels_py

try:
    from gridlock.solvers import _kernels
except ImportError:
    _kernels = None


def best_of(repeats, fn):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1000.0


def walled_grid(height, width, wall_p, seed):
    rng = np.random.default_rng(seed)
    cells = (rng.random((height, width)) < wall_p).astype(np.uint8)
    cells[0, 0] = cells[height - 1, width - 1] = 0
    return cells


def neighbor_workloads():
    rng = np.random.default_rng(11)
    for n_agents, label in ((2, "2 agents"), (4, "4 agents"), (6, "6 agents")):
        cells = walled_grid(8, 8, 0.15, seed=n_agents)
        free = [int(i) for i in np.flatnonzero(cells.ravel() == 0)]
        positions = tuple(rng.choice(free, size=n_agents, replace=False).tolist())
        blob = cells.tobytes()

        def run(impl, blob=blob, positions=positions):
            for _ in range(300):
                impl.joint_neighbors(blob, 8, positions)

        yield f"joint_neighbors 8x8 {label} x300", run


def astar_workloads():
    rng = np.random.default_rng(23)
    cells = walled_grid(16, 16, 0.2, seed=5)
    blob = cells.tobytes()
    free = [int(i) for i in np.flatnonzero(cells.ravel() == 0)]
    start, goal = free[0], free[-1]
    for n_constraints in (0, 60):
        vertex_block = set()
        edge_block = set()
        for _ in range(n_constraints):
            cell = int(rng.choice(free))
            t = int(rng.integers(1, 48))
            vertex_block.add(cell << 20 | t)

        def run(impl, vb=frozenset(vertex_block), eb=frozenset(edge_block)):
            for _ in range(100):
                impl.spacetime_astar(blob, 16, start, goal, 64, vb, eb, 0)

        yield f"spacetime_astar 16x16 {n_constraints} constraints x100", run


E2E_CHILD = """
import json, time
import numpy as np
from gridlock.layouts import build_layout, sample_tasks
from gridlock.solvers import KERNEL_IMPL, SolverBudget, solve

layout, _ = build_layout("rm2.1", None)
tasks = sample_tasks(layout, 4, np.random.default_rng(7))
budget = SolverBudget(wall_ms=60_000.0)
times = {}
for algorithm in ("cbs", "ma-astar"):
    t0 = time.perf_counter()
    solution = solve(algorithm, layout, tasks, budget=budget)
    times[algorithm] = (time.perf_counter() - t0) * 1000.0
    assert solution.status == "solved", (algorithm, solution.status)
print(json.dumps({"impl": KERNEL_IMPL, "ms": times}))
"""


def run_e2e(pure):
    env = dict(os.environ)
    if pure:
        env["GRIDLOCK_PURE_KERNELS"] = "1"
    else:
        env.pop("GRIDLOCK_PURE_KERNELS", None)
    out = subprocess.run(
        [sys.executable, "-c", E2E_CHILD],
        capture_output=True,
        text=True,
        env=env,
        check=True,
    )
    return json.loads(out.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--no-e2e", action="store_true")
    args = parser.parse_args(argv)

    if _kernels is None:
        print("compiled kernels unavailable; nothing to compare", file=sys.stderr)
        return 1

    rows = []
    for label, run in list(neighbor_workloads()) + list(astar_workloads()):
        python_ms = best_of(args.repeats, lambda: run(_kernels_py))
        cython_ms = best_of(args.repeats, lambda: run(_kernels))
        rows.append((label, python_ms, cython_ms))

    if not args.no_e2e:
        pure = run_e2e(pure=True)
        compiled = run_e2e(pure=False)
        assert pure["impl"] == "python" and compiled["impl"] == "cython"
        for algorithm in ("cbs", "ma-astar"):
            rows.append(
                (
                    f"solve {algorithm} rm2.1 4 agents (subprocess)",
                    pure["ms"][algorithm],
                    compiled["ms"][algorithm],
                )
            )

    width = max(len(label) for label, _, _ in rows)
    header = f"{'workload':<{width}}  {'python ms':>10}  {'cython ms':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, python_ms, cython_ms in rows:
        speedup = python_ms / cython_ms if cython_ms > 0 else float("inf")
        print(
            f"{label:<{width}}  {python_ms:>10.2f}  {cython_ms:>10.2f}  {speedup:>7.1f}x"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
