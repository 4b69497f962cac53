"""Exhaustive joint-search oracle for small instances.

Used as ground truth in tests and exposed through the CLI. Deliberately
independent of the solver kernels: plain BFS over joint states for optimal
makespan, and a Dijkstra over (positions, frozen-set) states for optimal
sum of costs. Freezing is a zero-cost commitment an agent can make while
standing on its goal; every joint step costs the number of unfrozen agents.
That charges goal waits that precede a later departure, which matches the
arrival-time convention of the path metrics exactly.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from ..grid import DELTAS, Position, is_free
from ..layouts import Task

_MOVE_DELTAS = DELTAS  # stay first, then up/right/down/left


class OracleCapacityError(ValueError):
    """Raised when the joint state space exceeds the configured cap."""


@dataclass(frozen=True)
class OracleResult:
    status: str  # "solvable" | "infeasible"
    optimal_makespan: int | None
    optimal_sum_of_costs: int | None
    witness: dict[int, list[Position]] | None


def _neighbors(cells: np.ndarray, pos: Position) -> list[Position]:
    out = []
    for dx, dy in _MOVE_DELTAS:
        nxt = (pos[0] + dx, pos[1] + dy)
        if is_free(cells, nxt):
            out.append(nxt)
    return out


def _conflict_free(current: Sequence[Position], proposed: Sequence[Position]) -> bool:
    n = len(current)
    for i in range(n):
        for j in range(i + 1, n):
            if proposed[i] == proposed[j]:
                return False
            if proposed[i] == current[j] and proposed[j] == current[i]:
                return False
    return True


def joint_bfs_oracle(
    cells: np.ndarray,
    tasks: Sequence[Task],
    cap: int = 2_000_000,
) -> OracleResult:
    """Exact optima for tiny instances (meant for <= 3 agents, small grids).

    Vertex and swap conflicts are forbidden, matching the standard collision
    model the solvers plan against. Raises OracleCapacityError when the
    estimated joint state space exceeds the cap.
    """
    n = len(tasks)
    if n < 1:
        raise ValueError("at least one task is required")
    free_count = int((cells == 0).sum())
    estimate = free_count**n * (2**n)
    if estimate > cap:
        raise OracleCapacityError(
            f"joint state estimate {estimate} exceeds cap {cap}"
        )
    starts = tuple(t.start for t in tasks)
    goals = tuple(t.goal for t in tasks)
    if len(set(starts)) != n or len(set(goals)) != n:
        raise ValueError("starts and goals must be pairwise distinct")
    for t in tasks:
        if not is_free(cells, t.start) or not is_free(cells, t.goal):
            raise ValueError("tasks must sit on free cells")

    neighbor_cache: dict[Position, list[Position]] = {}

    def neighbors(pos: Position) -> list[Position]:
        cached = neighbor_cache.get(pos)
        if cached is None:
            cached = neighbor_cache[pos] = _neighbors(cells, pos)
        return cached

    def joint_moves(state: tuple[Position, ...]):
        for proposal in product(*(neighbors(pos) for pos in state)):
            if _conflict_free(state, proposal):
                yield proposal

    # Optimal makespan: plain BFS to the all-at-goal state.
    parent: dict[tuple, tuple | None] = {starts: None}
    frontier = [starts]
    goal_state = None
    if starts == goals:
        goal_state = starts
    while frontier and goal_state is None:
        nxt_frontier = []
        for state in frontier:
            for proposal in joint_moves(state):
                if proposal in parent:
                    continue
                parent[proposal] = state
                if proposal == goals:
                    goal_state = proposal
                    break
                nxt_frontier.append(proposal)
            if goal_state is not None:
                break
        frontier = nxt_frontier
    if goal_state is None:
        return OracleResult("infeasible", None, None, None)

    joint_path = []
    node: tuple | None = goal_state
    while node is not None:
        joint_path.append(node)
        node = parent[node]
    joint_path.reverse()
    witness = {
        i + 1: [state[i] for state in joint_path] for i in range(n)
    }
    opt_makespan = len(joint_path) - 1

    # Optimal sum of costs: Dijkstra over (positions, frozen mask). Frozen
    # agents sit on their goals forever; a step costs the number of unfrozen
    # agents; freezing itself is free and only allowed on the goal.
    full_mask = (1 << n) - 1
    start_state = (starts, 0)
    dist: dict[tuple, int] = {start_state: 0}
    heap: list[tuple[int, int, tuple]] = [(0, 0, start_state)]
    counter = 1
    best = None
    while heap:
        cost, _, state = heapq.heappop(heap)
        if cost > dist.get(state, float("inf")):
            continue
        positions, mask = state
        if mask == full_mask:
            best = cost
            break
        # Zero-cost freeze edges, one agent at a time.
        for i in range(n):
            if not mask & (1 << i) and positions[i] == goals[i]:
                nxt = (positions, mask | (1 << i))
                if cost < dist.get(nxt, float("inf")):
                    dist[nxt] = cost
                    heapq.heappush(heap, (cost, counter, nxt))
                    counter += 1
        unfrozen = [i for i in range(n) if not mask & (1 << i)]
        step_cost = len(unfrozen)
        move_sets = [
            neighbors(pos) if i in unfrozen else [pos]
            for i, pos in enumerate(positions)
        ]
        for proposal in product(*move_sets):
            if not _conflict_free(positions, proposal):
                continue
            nxt = (proposal, mask)
            nxt_cost = cost + step_cost
            if nxt_cost < dist.get(nxt, float("inf")):
                dist[nxt] = nxt_cost
                heapq.heappush(heap, (nxt_cost, counter, nxt))
                counter += 1
    assert best is not None, "sum-of-costs search must succeed when BFS did"
    return OracleResult("solvable", opt_makespan, best, witness)


def iddfs_optimal_makespan(
    cells: np.ndarray,
    tasks: Sequence[Task],
    limit: int = 64,
) -> int | None:
    """Iterative-deepening check used to cross-validate the BFS oracle."""
    starts = tuple(t.start for t in tasks)
    goals = tuple(t.goal for t in tasks)

    neighbor_cache: dict[Position, list[Position]] = {}

    def neighbors(pos: Position) -> list[Position]:
        cached = neighbor_cache.get(pos)
        if cached is None:
            cached = neighbor_cache[pos] = _neighbors(cells, pos)
        return cached

    def dfs(state: tuple[Position, ...], depth: int, memo: dict) -> bool:
        if state == goals:
            return True
        if depth == 0:
            return False
        # Prune states already searched with at least this much budget left.
        if memo.get(state, -1) >= depth:
            return False
        memo[state] = depth
        for proposal in product(*(neighbors(pos) for pos in state)):
            if not _conflict_free(state, proposal):
                continue
            if dfs(proposal, depth - 1, memo):
                return True
        return False

    for depth in range(limit + 1):
        if dfs(starts, depth, {}):
            return depth
    return None
