"""Constrained single-agent planning on top of the space-time kernel."""

from __future__ import annotations

from typing import Iterable, Sequence

from ..grid import Position
from . import kernels
from .base import Constraint, cells_of, flat_index, unflat


def _packed_blocks(
    constraints: Iterable[Constraint], agent: int, width: int
) -> tuple[set[int], set[int]]:
    vertex_block: set[int] = set()
    edge_block: set[int] = set()
    for c in constraints:
        if c.agent != agent:
            continue
        if c.kind == "vertex":
            vertex_block.add(flat_index(c.cell, width) << 20 | c.t)
        else:
            edge_block.add(
                flat_index(c.frm, width) << 40
                | flat_index(c.to, width) << 20
                | c.t
            )
    return vertex_block, edge_block


def goal_stay_floor(
    constraints: Iterable[Constraint], agent: int, goal: Position
) -> int:
    """Earliest arrival time compatible with vertex constraints on the goal.

    An agent that has arrived occupies its goal forever, so it may not
    finish before the last constrained time on the goal cell has passed.
    """
    floor = 0
    for c in constraints:
        if c.agent == agent and c.kind == "vertex" and c.cell == goal:
            floor = max(floor, c.t)
    return floor


def low_level_astar(
    grid,
    start: Position,
    goal: Position,
    constraints: Sequence[Constraint] = (),
    agent: int = 1,
    horizon: int = 100,
) -> tuple[tuple[Position, ...] | None, int]:
    """Shortest constrained path for one agent, or None within the horizon.

    Returns (path, expansions). The path runs from t=0 to the arrival
    time with no trailing goal stays; constraints for other agents are
    ignored. A* over (cell, time) with the Manhattan heuristic, so the
    result is time-optimal among paths honoring the constraints.
    """
    if horizon < 1:
        raise ValueError("horizon must be positive")
    cells = cells_of(grid)
    width = cells.shape[1]
    for pos in (start, goal):
        x, y = pos
        if not (0 <= x < cells.shape[0] and 0 <= y < width):
            raise ValueError(f"position {pos} out of bounds")
        if cells[x, y] != 0:
            raise ValueError(f"position {pos} is a wall")
    vertex_block, edge_block = _packed_blocks(constraints, agent, width)
    floor = goal_stay_floor(constraints, agent, goal)
    flat_path, expansions = kernels.spacetime_astar(
        cells.tobytes(),
        width,
        flat_index(start, width),
        flat_index(goal, width),
        horizon,
        vertex_block,
        edge_block,
        floor,
    )
    if flat_path is None:
        return None, expansions
    return tuple(unflat(f, width) for f in flat_path), expansions
