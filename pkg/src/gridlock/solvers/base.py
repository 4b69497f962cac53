"""Shared solver types: budgets, constraints, and the Solution record."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..grid import GridLayout, Position

STATUSES = ("solved", "timeout", "infeasible")


@dataclass(frozen=True)
class SolverBudget:
    wall_ms: float = 60_000.0
    expansions: int | None = None  # total expansion cap, None = unlimited
    horizon: int = 100  # longest admissible path, in steps

    def __post_init__(self) -> None:
        if self.wall_ms <= 0:
            raise ValueError("wall_ms must be positive")
        if self.expansions is not None and self.expansions <= 0:
            raise ValueError("expansion limit must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")


@dataclass(frozen=True)
class Constraint:
    """Forbids one agent a cell at a time (vertex) or a transition
    arriving at a time (edge)."""

    agent: int
    kind: str  # "vertex" | "edge"
    t: int
    cell: Position | None = None
    frm: Position | None = None
    to: Position | None = None

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ValueError("constraint time must be >= 0")
        if self.kind == "vertex":
            if self.cell is None or self.frm is not None or self.to is not None:
                raise ValueError("vertex constraint takes exactly a cell")
        elif self.kind == "edge":
            if self.cell is not None or self.frm is None or self.to is None:
                raise ValueError("edge constraint takes frm and to")
        else:
            raise ValueError(f"unknown constraint kind {self.kind!r}")


def vertex_constraint(agent: int, cell: Position, t: int) -> Constraint:
    return Constraint(agent=agent, kind="vertex", t=t, cell=cell)


def edge_constraint(agent: int, frm: Position, to: Position, t: int) -> Constraint:
    return Constraint(agent=agent, kind="edge", t=t, frm=frm, to=to)


@dataclass(frozen=True)
class Solution:
    """Solver output: per-agent paths up to arrival, goal-stay implied."""

    status: str
    paths: dict[int, tuple[Position, ...]] | None
    makespan: int | None
    sum_of_costs: int | None
    expansions: int
    wall_ms: float

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if (self.status == "solved") != (self.paths is not None):
            raise ValueError("paths exactly when solved")

    def to_json(self) -> str:
        paths = None
        if self.paths is not None:
            paths = {
                str(agent): [list(p) for p in path]
                for agent, path in sorted(self.paths.items())
            }
        return json.dumps(
            {
                "status": self.status,
                "makespan": self.makespan,
                "sum_of_costs": self.sum_of_costs,
                "wall_ms": round(self.wall_ms, 3),
                "expansions": self.expansions,
                "paths": paths,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Solution":
        data = json.loads(text)
        paths = data.get("paths")
        if paths is not None:
            paths = {
                int(agent): tuple(tuple(p) for p in path)
                for agent, path in paths.items()
            }
        return cls(
            status=data["status"],
            paths=paths,
            makespan=data["makespan"],
            sum_of_costs=data["sum_of_costs"],
            expansions=data["expansions"],
            wall_ms=data["wall_ms"],
        )


def cells_of(grid) -> np.ndarray:
    if isinstance(grid, GridLayout):
        return grid.cells
    cells = np.asarray(grid, dtype=np.uint8)
    if cells.ndim != 2:
        raise ValueError("grid must be a 2-d cell array")
    return cells


def flat_index(pos: Position, width: int) -> int:
    return pos[0] * width + pos[1]


def unflat(index: int, width: int) -> Position:
    return divmod(index, width)
