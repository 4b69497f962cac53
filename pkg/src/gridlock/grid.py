"""Grid geometry, collision rules, plan conflicts, and path metrics.

Positions are (x, y) pairs where x indexes rows (downward) and y indexes
columns (rightward). Grids are numpy uint8 arrays with 0 for a free cell
and 1 for a wall. Action codes: 0 stay, 1 up, 2 right, 3 down, 4 left.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

Position = tuple[int, int]

STAY, UP, RIGHT, DOWN, LEFT = range(5)
ACTIONS = (STAY, UP, RIGHT, DOWN, LEFT)
# Row/column displacement per action code, index-aligned with ACTIONS.
DELTAS = ((0, 0), (-1, 0), (0, 1), (1, 0), (0, -1))

COLLISION_MODELS = ("strict", "standard")

FREE_CHAR = "."
WALL_CHAR = "#"


class GridError(ValueError):
    """Raised for malformed grids, layouts, or layout files."""


@dataclass(frozen=True)
class GridLayout:
    """A named rectangular grid with an immutable wall mask."""

    name: str
    cells: np.ndarray
    family: str | None = None
    variant: str | None = None
    params: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        cells = np.ascontiguousarray(self.cells, dtype=np.uint8)
        if cells.ndim != 2 or cells.size == 0:
            raise GridError("grid must be a non-empty 2-D array")
        if not np.isin(cells, (0, 1)).all():
            raise GridError("grid cells must be 0 (free) or 1 (wall)")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "params", dict(self.params))

    @property
    def height(self) -> int:
        return int(self.cells.shape[0])

    @property
    def width(self) -> int:
        return int(self.cells.shape[1])

    def walls(self) -> frozenset[Position]:
        return frozenset((int(x), int(y)) for x, y in np.argwhere(self.cells == 1))

    def free_cells(self) -> tuple[Position, ...]:
        """Free cells in row-major order."""
        return tuple((int(x), int(y)) for x, y in np.argwhere(self.cells == 0))

    def in_bounds(self, pos: Position) -> bool:
        return in_bounds(self.cells, pos)

    def is_free(self, pos: Position) -> bool:
        return is_free(self.cells, pos)

    def to_text(self) -> str:
        return grid_to_text(self.cells)


def grid_from_text(text: str) -> np.ndarray:
    """Parse the '.'/'#' text form into a uint8 grid.

    Surrounding blank lines are tolerated; rows must be equally long and
    contain only the two cell characters.
    """
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise GridError("empty grid text")
    width = len(lines[0])
    rows = []
    for line in lines:
        if len(line) != width:
            raise GridError("grid rows must all have the same length")
        row = []
        for ch in line:
            if ch == FREE_CHAR:
                row.append(0)
            elif ch == WALL_CHAR:
                row.append(1)
            else:
                raise GridError(f"invalid grid character {ch!r}")
        rows.append(row)
    return np.array(rows, dtype=np.uint8)


def grid_to_text(cells: np.ndarray) -> str:
    return "\n".join(
        "".join(WALL_CHAR if cell else FREE_CHAR for cell in row) for row in cells
    )


def in_bounds(cells: np.ndarray, pos: Position) -> bool:
    x, y = pos
    return 0 <= x < cells.shape[0] and 0 <= y < cells.shape[1]


def is_free(cells: np.ndarray, pos: Position) -> bool:
    return in_bounds(cells, pos) and cells[pos[0], pos[1]] == 0


def manhattan(a: Position, b: Position) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass(frozen=True)
class MoveOutcome:
    position: Position
    blocked: bool


def apply_action(cells: np.ndarray, pos: Position, action: int) -> MoveOutcome:
    """Resolve one action against the static grid.

    Moves into walls or off the grid are blocked and resolve to staying at
    the current cell; the outcome records that the move was blocked.
    """
    if action not in ACTIONS:
        raise ValueError(f"invalid action code {action!r}")
    if not is_free(cells, pos):
        raise ValueError(f"position {pos} is not a free cell")
    dx, dy = DELTAS[action]
    target = (pos[0] + dx, pos[1] + dy)
    if is_free(cells, target):
        return MoveOutcome(target, False)
    return MoveOutcome(pos, action != STAY)


def detect_collisions(
    current: Mapping[int, Position],
    proposed: Mapping[int, Position],
    model: str = "standard",
) -> dict[int, bool]:
    """Per-agent collision flags for one simultaneous move proposal.

    Under the strict model an agent is flagged when it proposes any cell that
    is currently occupied by another agent (this covers following moves and
    swaps) or that another agent proposes at the same time. Under the
    standard model only same-target proposals and direct swaps are flagged,
    which is the conflict notion the solvers plan against.
    """
    if model not in COLLISION_MODELS:
        raise ValueError(f"unknown collision model {model!r}")
    if not current:
        raise ValueError("at least one agent is required")
    if set(current) != set(proposed):
        raise ValueError("current and proposed positions must cover the same agents")
    agents = sorted(current)
    flags = {i: False for i in agents}
    for idx, i in enumerate(agents):
        for j in agents[idx + 1 :]:
            same_target = proposed[i] == proposed[j]
            if same_target:
                flags[i] = flags[j] = True
                continue
            if model == "strict":
                if proposed[i] == current[j]:
                    flags[i] = True
                if proposed[j] == current[i]:
                    flags[j] = True
            else:
                if proposed[i] == current[j] and proposed[j] == current[i]:
                    flags[i] = flags[j] = True
    return flags


@dataclass(frozen=True)
class Conflict:
    kind: str  # vertex | edge | following | swapping | cycle
    time: int
    agents: tuple[int, ...]
    cells: tuple[Position, ...]


_KIND_ORDER = {"vertex": 0, "edge": 1, "following": 2, "swapping": 3, "cycle": 4}


def _padded(plans: Mapping[int, Sequence[Position]]) -> dict[int, list[Position]]:
    if not plans:
        raise ValueError("empty plan set")
    for agent, path in plans.items():
        if not path:
            raise ValueError(f"agent {agent} has an empty plan")
    horizon = max(len(path) for path in plans.values())
    return {
        agent: list(path) + [path[-1]] * (horizon - len(path))
        for agent, path in plans.items()
    }


def classify_conflicts(
    plans: Mapping[int, Sequence[Position]]
) -> list[Conflict]:
    """Report every vertex, edge, following, swapping, and cycle conflict.

    Plans shorter than the longest one are padded with goal stays. The
    categories are not mutually exclusive: an edge conflict implies vertex
    conflicts at both endpoints, swaps imply following in both directions,
    and rotations imply following along the ring. Closed rotations of two
    agents are reported as swapping, longer ones as cycle.
    """
    padded = _padded(plans)
    agents = sorted(padded)
    horizon = len(next(iter(padded.values()))) - 1
    conflicts: list[Conflict] = []

    for t in range(horizon + 1):
        groups: dict[Position, list[int]] = {}
        for agent in agents:
            groups.setdefault(padded[agent][t], []).append(agent)
        for cell, members in sorted(groups.items()):
            if len(members) > 1:
                conflicts.append(Conflict("vertex", t, tuple(members), (cell,)))

    for t in range(horizon):
        for idx, i in enumerate(agents):
            pi_now, pi_next = padded[i][t], padded[i][t + 1]
            moved_i = pi_now != pi_next
            for j in agents[idx + 1 :]:
                pj_now, pj_next = padded[j][t], padded[j][t + 1]
                if moved_i and pi_now == pj_now and pi_next == pj_next:
                    conflicts.append(
                        Conflict("edge", t + 1, (i, j), (pi_now, pi_next))
                    )
                if (
                    pi_next == pj_now
                    and pj_next == pi_now
                    and pi_now != pj_now
                ):
                    conflicts.append(
                        Conflict("swapping", t + 1, (i, j), (pi_now, pj_now))
                    )
            for j in agents:
                if j != i and moved_i and pi_next == padded[j][t]:
                    conflicts.append(
                        Conflict("following", t + 1, (i, j), (pi_next,))
                    )

    for t in range(horizon):
        occupant = {}
        for agent in agents:
            occupant.setdefault(padded[agent][t], agent)
        succ: dict[int, int] = {}
        for i in agents:
            if padded[i][t + 1] == padded[i][t]:
                continue
            j = occupant.get(padded[i][t + 1])
            if j is not None and j != i and padded[j][t + 1] != padded[j][t]:
                succ[i] = j
        seen: set[int] = set()
        for start in agents:
            if start in seen or start not in succ:
                continue
            chain, node = [], start
            on_chain: set[int] = set()
            while node in succ and node not in on_chain and node not in seen:
                chain.append(node)
                on_chain.add(node)
                node = succ[node]
            seen.update(on_chain)
            if node in on_chain:
                ring = chain[chain.index(node) :]
                if len(ring) >= 3:
                    pivot = ring.index(min(ring))
                    ring = ring[pivot:] + ring[:pivot]
                    conflicts.append(
                        Conflict(
                            "cycle",
                            t + 1,
                            tuple(ring),
                            tuple(padded[a][t] for a in ring),
                        )
                    )

    conflicts.sort(key=lambda c: (c.time, _KIND_ORDER[c.kind], c.agents))
    return conflicts


def arrival_time(path: Sequence[Position]) -> int:
    """Smallest t* such that the path sits at its final cell from t* onward."""
    if not path:
        raise ValueError("empty path")
    final = path[-1]
    t = len(path) - 1
    while t > 0 and path[t - 1] == final:
        t -= 1
    return t


def makespan(plans: Mapping[int, Sequence[Position]]) -> int:
    if not plans:
        raise ValueError("empty plan set")
    return max(arrival_time(path) for path in plans.values())


def sum_of_costs(plans: Mapping[int, Sequence[Position]]) -> int:
    if not plans:
        raise ValueError("empty plan set")
    return sum(arrival_time(path) for path in plans.values())
