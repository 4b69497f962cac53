"""Conflict-based search: optimal sum-of-costs via constraint branching."""

from __future__ import annotations

import heapq
import time
from typing import Mapping, Sequence

from ..grid import Position, arrival_time
from ..layouts import Task
from .base import (
    Constraint,
    Solution,
    SolverBudget,
    edge_constraint,
    cells_of,
    vertex_constraint,
)
from .low_level import low_level_astar
from .ma_astar import _validate_tasks

Paths = dict[int, tuple[Position, ...]]


def _padded(paths: Mapping[int, Sequence[Position]], span: int):
    return {
        a: list(p) + [p[-1]] * (span - (len(p) - 1))
        for a, p in paths.items()
    }


def first_conflict(paths: Mapping[int, Sequence[Position]]):
    """Earliest conflict in a plan set, or None.

    Vertex conflicts are reported at the occupancy time, swaps at the
    arrival time of the crossing move; at equal times vertex wins, then
    the lowest agent tuple. Arrived agents keep occupying their goals.
    Returns ("vertex", t, agents, cell) or ("swap", t, (i, j), None).
    """
    agents = sorted(paths)
    span = max(len(paths[a]) - 1 for a in agents)
    padded = _padded(paths, span)
    for t in range(span + 1):
        groups: dict[Position, list[int]] = {}
        for a in agents:
            groups.setdefault(padded[a][t], []).append(a)
        vertex = sorted(
            (tuple(group), cell)
            for cell, group in groups.items()
            if len(group) > 1
        )
        if vertex:
            group, cell = vertex[0]
            return ("vertex", t, group, cell)
        if t == 0:
            continue
        for i in agents:
            for j in agents:
                if j <= i:
                    continue
                if (
                    padded[i][t] == padded[j][t - 1]
                    and padded[j][t] == padded[i][t - 1]
                    and padded[i][t] != padded[i][t - 1]
                ):
                    return ("swap", t, (i, j), None)
    return None


def solve_cbs(
    grid,
    tasks: Sequence[Task],
    budget: SolverBudget | None = None,
) -> Solution:
    """Sum-of-costs-optimal plan under the standard collision model.

    Best-first search over a constraint tree: each node holds per-agent
    constraints and shortest compatible paths; the earliest conflict
    spawns one child per involved agent with that spot newly forbidden,
    and only that agent is replanned. Expansions count tree pops plus
    all low-level expansions.
    """
    if budget is None:
        budget = SolverBudget()
    cells = cells_of(grid)
    _validate_tasks(cells, tasks)
    horizon = budget.horizon
    t0 = time.monotonic()
    deadline = t0 + budget.wall_ms / 1000.0
    low_expansions = 0
    ct_pops = 0

    def finish(status: str, paths=None, span=None, soc=None) -> Solution:
        return Solution(
            status=status,
            paths=paths,
            makespan=span,
            sum_of_costs=soc,
            expansions=ct_pops + low_expansions,
            wall_ms=(time.monotonic() - t0) * 1000.0,
        )

    def replan(agent: int, constraints: tuple[Constraint, ...]):
        nonlocal low_expansions
        task = tasks[agent - 1]
        path, exp = low_level_astar(
            cells, task.start, task.goal, constraints, agent, horizon
        )
        low_expansions += exp
        return path

    root_paths: Paths = {}
    for agent in range(1, len(tasks) + 1):
        path = replan(agent, ())
        if path is None:
            return finish("infeasible")
        root_paths[agent] = path

    def cost_of(paths: Paths) -> int:
        return sum(arrival_time(p) for p in paths.values())

    seq = 0
    open_heap: list[tuple[int, int, Paths, tuple[Constraint, ...]]] = [
        (cost_of(root_paths), seq, root_paths, ())
    ]
    while open_heap:
        cost, _, paths, constraints = heapq.heappop(open_heap)
        ct_pops += 1
        if time.monotonic() > deadline:
            return finish("timeout")
        conflict = first_conflict(paths)
        if conflict is None:
            span = max(arrival_time(p) for p in paths.values())
            return finish("solved", dict(paths), span, cost)
        if (
            budget.expansions is not None
            and ct_pops + low_expansions >= budget.expansions
        ):
            return finish("timeout")
        kind, t, group, cell = conflict
        span = max(len(paths[a]) - 1 for a in group)
        padded = _padded({a: paths[a] for a in group}, span)
        for agent in group:
            if kind == "vertex":
                extra = vertex_constraint(agent, cell, t)
            else:
                extra = edge_constraint(
                    agent, padded[agent][t - 1], padded[agent][t], t
                )
            child_constraints = constraints + (extra,)
            path = replan(agent, child_constraints)
            if path is None:
                continue
            child_paths = dict(paths)
            child_paths[agent] = path
            seq += 1
            heapq.heappush(
                open_heap,
                (cost_of(child_paths), seq, child_paths, child_constraints),
            )
    return finish("infeasible")
