"""Joint-space multi-agent A* over composite states."""

from __future__ import annotations

import heapq
import time
from typing import Sequence

from ..grid import Position, arrival_time
from ..layouts import Task
from . import kernels
from .base import Solution, SolverBudget, cells_of, flat_index, unflat

HEURISTICS = ("max", "sum")


def _validate_tasks(cells, tasks: Sequence[Task]) -> None:
    if not tasks:
        raise ValueError("at least one task is required")
    starts = [t.start for t in tasks]
    goals = [t.goal for t in tasks]
    if len(set(starts)) != len(starts):
        raise ValueError("starts must be pairwise distinct")
    if len(set(goals)) != len(goals):
        raise ValueError("goals must be pairwise distinct")
    height, width = cells.shape
    for pos in starts + goals:
        x, y = pos
        if not (0 <= x < height and 0 <= y < width):
            raise ValueError(f"position {pos} out of bounds")
        if cells[x, y] != 0:
            raise ValueError(f"position {pos} is a wall")


def solve_ma_astar(
    grid,
    tasks: Sequence[Task],
    budget: SolverBudget | None = None,
    heuristic: str = "max",
    forbid_following: bool = False,
) -> Solution:
    """Makespan-optimal joint plan, or timeout/infeasible.

    States are joint position tuples, each step advances every agent at
    once, and successors exclude vertex and swap collisions (plus moves
    into any currently occupied cell when forbid_following is set). The
    default max-of-Manhattan heuristic is consistent for the makespan
    objective; "sum" is a faster inadmissible alternative that may return
    longer plans.
    """
    if budget is None:
        budget = SolverBudget()
    if heuristic not in HEURISTICS:
        raise ValueError(f"unknown heuristic {heuristic!r}")
    cells = cells_of(grid)
    _validate_tasks(cells, tasks)
    width = cells.shape[1]
    cell_bytes = cells.tobytes()
    starts = tuple(flat_index(t.start, width) for t in tasks)
    goals = tuple(flat_index(t.goal, width) for t in tasks)
    goal_coords = [divmod(g, width) for g in goals]

    def h(positions: tuple[int, ...]) -> int:
        dists = (
            abs(p // width - gx) + abs(p % width - gy)
            for p, (gx, gy) in zip(positions, goal_coords)
        )
        return sum(dists) if heuristic == "sum" else max(dists)

    t0 = time.monotonic()
    horizon = budget.horizon
    deadline = t0 + budget.wall_ms / 1000.0
    expansions = 0

    def finish(status: str, paths=None, span=None, soc=None) -> Solution:
        return Solution(
            status=status,
            paths=paths,
            makespan=span,
            sum_of_costs=soc,
            expansions=expansions,
            wall_ms=(time.monotonic() - t0) * 1000.0,
        )

    h0 = h(starts)
    open_heap: list[tuple[int, int, int, tuple[int, ...]]] = []
    best_g: dict[tuple[int, ...], int] = {}
    parent: dict[tuple[int, ...], tuple[int, ...] | None] = {}
    if h0 <= horizon:
        open_heap.append((h0, h0, 0, starts))
        best_g[starts] = 0
        parent[starts] = None
    seq = 1
    pops = 0
    while open_heap:
        f, hv, _, positions = heapq.heappop(open_heap)
        pops += 1
        if pops % 128 == 0:
            if time.monotonic() > deadline:
                return finish("timeout")
        g = f - hv
        if g > best_g[positions]:
            continue  # stale entry, a cheaper route got there first
        expansions += 1
        if positions == goals:
            joint: list[tuple[int, ...]] = []
            node: tuple[int, ...] | None = positions
            while node is not None:
                joint.append(node)
                node = parent[node]
            joint.reverse()
            paths = {}
            for i in range(len(tasks)):
                full = [unflat(state[i], width) for state in joint]
                paths[i + 1] = tuple(full[: arrival_time(full) + 1])
            span = len(joint) - 1
            soc = sum(len(p) - 1 for p in paths.values())
            return finish("solved", paths, span, soc)
        if budget.expansions is not None and expansions >= budget.expansions:
            return finish("timeout")
        ng = g + 1
        for nxt in kernels.joint_neighbors(
            cell_bytes, width, positions, forbid_following
        ):
            nh = h(nxt)
            if ng + nh > horizon:
                continue
            if ng < best_g.get(nxt, ng + 1):
                best_g[nxt] = ng
                parent[nxt] = positions
                heapq.heappush(open_heap, (ng + nh, nh, seq, nxt))
                seq += 1
    return finish("infeasible")
