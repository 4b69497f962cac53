"""Reference grid layouts, task sampling, and layout file IO.

Seven layout families cover the benchmark scenarios: pocket-aisle and plain
corridors, a single wall passage, a four-way intersection, a warehouse block
layout (with a closed-aisle variant), a fishbone picking floor whose diagonal
aisles are rasterized as 45-degree staircases, and a production floor with
loop roads and dead-end goal aisles. Every layout is deterministic: the same
family, variant, and params always produce the same grid and default tasks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from ..grid import GridError, GridLayout, Position, grid_from_text, grid_to_text

__all__ = [
    "Task",
    "TaskSet",
    "LayoutError",
    "build_layout",
    "layout_families",
    "layout_variants",
    "sample_tasks",
    "validate_layout",
    "save_layout",
    "load_layout",
    "resolve_layout",
    "connected_components",
]


class LayoutError(GridError):
    """Raised for unknown families/variants or invalid layout parameters."""


@dataclass(frozen=True)
class Task:
    start: Position
    goal: Position


TaskSet = tuple[Task, ...]


def _layout(name, family, variant, text, params):
    return GridLayout(
        name=name,
        cells=grid_from_text(text),
        family=family,
        variant=variant,
        params=params,
    )


def _tasks(*pairs: tuple[Position, Position]) -> TaskSet:
    return tuple(Task(start, goal) for start, goal in pairs)


def _require_params(family, params, allowed):
    unknown = set(params) - set(allowed)
    if unknown:
        raise LayoutError(f"{family} does not accept params {sorted(unknown)}")


# --- rm1.1: corridor with a single evasion pocket -------------------------
#
# Two agents trade ends of an 8-cell corridor. Exactly one place to pass:
# the pocket above (or below, in the alt-aisle variant) the corridor. The
# basic task pair is calibrated so the optimal makespan is exactly 9 (seven
# traversal steps plus a two-step pocket detour for the evading agent).


def _rm1_1(variant, params):
    _require_params("rm1.1", params, ())
    if variant == "basic":
        text = "###.####\n........\n########"
        tasks = _tasks(((1, 0), (1, 7)), ((1, 7), (1, 0)))
        pocket = (0, 3)
    elif variant == "unfavorable":
        # Head-on start in the corridor middle with goals behind the other
        # agent, so the conflict is immediate and both flows cross the pocket
        # column.
        text = "###.####\n........\n########"
        tasks = _tasks(((1, 4), (1, 0)), ((1, 3), (1, 7)))
        pocket = (0, 3)
    elif variant == "alt-aisle":
        text = "########\n........\n####.###"
        tasks = _tasks(((1, 0), (1, 7)), ((1, 7), (1, 0)))
        pocket = (2, 4)
    else:
        raise LayoutError(f"unknown rm1.1 variant {variant!r}")
    layout = _layout(
        f"rm1.1:{variant}",
        "rm1.1",
        variant,
        text,
        {"corridor_length": 8, "pocket": pocket},
    )
    return layout, tasks


# --- rm1.2: plain corridor between two open zones -------------------------


def _rm1_2(variant, params):
    _require_params("rm1.2", params, ("corridor_length",))
    defaults = {"basic": 4, "long-corridor": 5, "three-agents": 4}
    if variant not in defaults:
        raise LayoutError(f"unknown rm1.2 variant {variant!r}")
    length = int(params.get("corridor_length", defaults[variant]))
    if length < 2:
        raise LayoutError("corridor_length must be at least 2")
    width = length + 4
    zone = ".."
    top = zone + "#" * length + zone
    mid = "." * width
    text = "\n".join([top, mid, top])
    right = width - 1
    if variant == "three-agents":
        tasks = _tasks(
            ((0, 0), (0, right)),
            ((2, 0), (2, right)),
            ((1, right), (1, 0)),
        )
    else:
        tasks = _tasks(((1, 0), (1, right)), ((1, right), (1, 0)))
    layout = _layout(
        f"rm1.2:{variant}", "rm1.2", variant, text, {"corridor_length": length}
    )
    return layout, tasks


# --- rm1.3: two zones split by a wall with one passage --------------------


def _rm1_3(variant, params):
    _require_params("rm1.3", params, ("passage_row",))
    defaults = {"basic": 2, "shifted-passage": 0, "three-agents": 2}
    if variant not in defaults:
        raise LayoutError(f"unknown rm1.3 variant {variant!r}")
    passage = int(params.get("passage_row", defaults[variant]))
    rows, wall_col, width = 5, 4, 9
    if not 0 <= passage < rows:
        raise LayoutError(f"passage_row must be in 0..{rows - 1}")
    lines = []
    for x in range(rows):
        row = ["."] * width
        if x != passage:
            row[wall_col] = "#"
        lines.append("".join(row))
    text = "\n".join(lines)
    if variant == "three-agents":
        tasks = _tasks(
            ((0, 0), (0, 8)),
            ((4, 0), (4, 8)),
            ((2, 8), (2, 0)),
        )
    else:
        tasks = _tasks(((2, 0), (2, 8)), ((2, 8), (2, 0)))
    layout = _layout(
        f"rm1.3:{variant}", "rm1.3", variant, text, {"passage_row": passage}
    )
    return layout, tasks


# --- rm1.4: four-way intersection ------------------------------------------


def _rm1_4(variant, params):
    _require_params("rm1.4", params, ("arm_length",))
    if variant not in ("basic", "varied", "long-paths"):
        raise LayoutError(f"unknown rm1.4 variant {variant!r}")
    arm = int(params.get("arm_length", 4 if variant == "long-paths" else 3))
    if arm < 1:
        raise LayoutError("arm_length must be at least 1")
    height = 7
    width = 2 * arm + 1
    cx, cy = height // 2, arm
    lines = []
    for x in range(height):
        row = ["#"] * width
        if x == cx:
            row = ["."] * width
        else:
            row[cy] = "."
        lines.append("".join(row))
    text = "\n".join(lines)
    north, south = (0, cy), (height - 1, cy)
    west, east = (cx, 0), (cx, width - 1)
    if variant == "varied":
        # A rotation: every agent still crosses the center, path lengths mix.
        tasks = _tasks((north, east), (east, south), (south, west), (west, north))
    else:
        tasks = _tasks((north, south), (south, north), (west, east), (east, west))
    layout = _layout(
        f"rm1.4:{variant}", "rm1.4", variant, text, {"arm_length": arm}
    )
    return layout, tasks


# --- rm2.1: warehouse block layout ----------------------------------------
#
# Storage blocks separated by one-row cross aisles and two-column vertical
# roads. The dead-ends variant keeps the same horizontal aisles but extends
# every block to the right edge, so each aisle can only be entered from the
# left road.


def _rm2_1(variant, params):
    _require_params("rm2.1", params, ("bands", "block_cols"))
    if variant not in ("block", "dead-ends"):
        raise LayoutError(f"unknown rm2.1 variant {variant!r}")
    bands = int(params.get("bands", 3))
    block_cols = int(params.get("block_cols", 2))
    if bands < 1 or block_cols < 1:
        raise LayoutError("bands and block_cols must be positive")
    width = 2 + block_cols * 6
    height = 3 * bands + 1
    cells = np.zeros((height, width), dtype=np.uint8)
    for band in range(bands):
        rows = slice(3 * band + 1, 3 * band + 3)
        if variant == "dead-ends":
            cells[rows, 2:] = 1
        else:
            for b in range(block_cols):
                start = 2 + b * 6
                cells[rows, start : start + 4] = 1
    layout = _layout(
        f"rm2.1:{variant}",
        "rm2.1",
        variant,
        grid_to_text(cells),
        {"bands": bands, "block_cols": block_cols},
    )
    return layout, None


# --- rm2.2: fishbone picking floor ----------------------------------------
#
# Vertical picking aisles hang from nothing at the top and meet a full
# bottom cross aisle; a central spine and two 45-degree staircase diagonals
# (rasterized as alternating vertical/horizontal steps) cut through the
# blocks and intersect every aisle.


def _rm2_2(variant, params):
    _require_params("rm2.2", params, ())
    if variant != "basic":
        raise LayoutError(f"unknown rm2.2 variant {variant!r}")
    height, width = 10, 14
    cells = np.ones((height, width), dtype=np.uint8)
    cells[9, :] = 0  # bottom cross aisle
    cells[0:9, 7] = 0  # central spine
    for col in (1, 3, 5, 9, 11, 13):
        cells[0:9, col] = 0  # picking aisles
    for x, y in (
        (8, 6), (7, 6), (6, 4), (5, 4), (4, 2), (3, 2),  # left diagonal
        (8, 8), (7, 8), (6, 10), (5, 10), (4, 12), (3, 12),  # right diagonal
    ):
        cells[x, y] = 0
    layout = _layout(
        "rm2.2:basic", "rm2.2", variant, grid_to_text(cells), {}
    )
    return layout, None


# --- rm3.1: production floor with loop roads and goal aisles ---------------
#
# A two-lane road on top, one-lane roads elsewhere, an outer loop, a central
# one-lane crossing, and dead-end goal aisles carved into the two storage
# blocks. The short-goal-aisles variant shrinks every aisle to a single stub.


def _rm3_1(variant, params):
    _require_params("rm3.1", params, ())
    if variant not in ("basic", "short-goal-aisles"):
        raise LayoutError(f"unknown rm3.1 variant {variant!r}")
    height, width = 10, 14
    cells = np.ones((height, width), dtype=np.uint8)
    cells[1:3, 1:13] = 0  # two-lane top road
    cells[8, 1:13] = 0  # one-lane bottom road
    cells[1:9, 1] = 0  # left road
    cells[1:9, 12] = 0  # right road
    cells[3:8, 7] = 0  # central crossing
    if variant == "basic":
        cells[3:7, 3] = 0  # long aisle, entered from the top road
        cells[4:8, 5] = 0  # long aisle, entered from the bottom road
        cells[4:8, 10] = 0  # long aisle, entered from the bottom road
    else:
        for x, y in ((3, 3), (3, 9), (7, 5), (7, 10)):
            cells[x, y] = 0  # single-cell goal stubs off the roads
    layout = _layout(
        f"rm3.1:{variant}", "rm3.1", variant, grid_to_text(cells), {}
    )
    return layout, None


_BUILDERS: dict[str, tuple[Callable, tuple[str, ...]]] = {
    "rm1.1": (_rm1_1, ("basic", "unfavorable", "alt-aisle")),
    "rm1.2": (_rm1_2, ("basic", "three-agents", "long-corridor")),
    "rm1.3": (_rm1_3, ("basic", "three-agents", "shifted-passage")),
    "rm1.4": (_rm1_4, ("basic", "varied", "long-paths")),
    "rm2.1": (_rm2_1, ("block", "dead-ends")),
    "rm2.2": (_rm2_2, ("basic",)),
    "rm3.1": (_rm3_1, ("basic", "short-goal-aisles")),
}


def _canonical_family(family: str) -> str:
    name = family.strip().lower().replace("_", ".")
    if name not in _BUILDERS:
        raise LayoutError(f"unknown layout family {family!r}")
    return name


def layout_families() -> tuple[str, ...]:
    return tuple(_BUILDERS)


def layout_variants(family: str) -> tuple[str, ...]:
    return _BUILDERS[_canonical_family(family)][1]


def build_layout(
    family: str, variant: str | None = None, **params
) -> tuple[GridLayout, TaskSet | None]:
    """Build a reference layout.

    Returns the grid plus the fixed default tasks for families that define
    them (rm1_x); rm2_x and rm3_1 return None because their tasks are meant
    to be sampled.
    """
    name = _canonical_family(family)
    builder, variants = _BUILDERS[name]
    if variant is None:
        variant = variants[0]
    variant = variant.replace("_", "-")
    if variant not in variants:
        raise LayoutError(
            f"unknown {name} variant {variant!r}; choose from {variants}"
        )
    return builder(variant, params)


# --- task sampling and validation ------------------------------------------


def connected_components(layout: GridLayout) -> dict[Position, int]:
    """Label each free cell with a component id via flood fill."""
    labels: dict[Position, int] = {}
    next_label = 0
    for cell in layout.free_cells():
        if cell in labels:
            continue
        stack = [cell]
        labels[cell] = next_label
        while stack:
            x, y = stack.pop()
            for dx, dy in ((-1, 0), (0, 1), (1, 0), (0, -1)):
                nxt = (x + dx, y + dy)
                if layout.is_free(nxt) and nxt not in labels:
                    labels[nxt] = next_label
                    stack.append(nxt)
        next_label += 1
    return labels


class CapacityError(LayoutError):
    """Raised when a grid has too few free cells for the requested agents."""


class TaskSamplingError(LayoutError):
    """Raised when no valid task set could be sampled."""


_MAX_SAMPLE_ATTEMPTS = 10_000


def sample_tasks(
    layout: GridLayout, n_agents: int, rng: np.random.Generator
) -> TaskSet:
    """Sample starts and goals uniformly without replacement.

    Starts are pairwise distinct, goals are pairwise distinct, no agent
    starts on its own goal, and every goal is reachable from its start.
    Draws are rejected until all constraints hold.
    """
    if n_agents < 1:
        raise LayoutError("n_agents must be positive")
    free = layout.free_cells()
    if len(free) < 2 * n_agents:
        raise CapacityError(
            f"{layout.name} has {len(free)} free cells; "
            f"{2 * n_agents} needed for {n_agents} agents"
        )
    components = connected_components(layout)
    for _ in range(_MAX_SAMPLE_ATTEMPTS):
        start_idx = rng.choice(len(free), size=n_agents, replace=False)
        goal_idx = rng.choice(len(free), size=n_agents, replace=False)
        starts = [free[int(i)] for i in start_idx]
        goals = [free[int(i)] for i in goal_idx]
        if any(s == g for s, g in zip(starts, goals)):
            continue
        if any(components[s] != components[g] for s, g in zip(starts, goals)):
            continue
        return _tasks(*zip(starts, goals))
    raise TaskSamplingError(
        f"no valid task set for {n_agents} agents on {layout.name} "
        f"after {_MAX_SAMPLE_ATTEMPTS} attempts"
    )


def validate_layout(layout: GridLayout, tasks: TaskSet | None) -> list[str]:
    """Return a list of violations; an empty list means valid."""
    violations: list[str] = []
    if tasks is None:
        return violations
    components = connected_components(layout)
    starts = [t.start for t in tasks]
    goals = [t.goal for t in tasks]
    if len(set(starts)) != len(starts):
        violations.append("starts are not pairwise distinct")
    if len(set(goals)) != len(goals):
        violations.append("goals are not pairwise distinct")
    for i, task in enumerate(tasks, start=1):
        for kind, pos in (("start", task.start), ("goal", task.goal)):
            if not layout.is_free(pos):
                violations.append(f"agent {i} {kind} {pos} is not a free cell")
        if task.start == task.goal:
            violations.append(f"agent {i} starts on its own goal")
        if (
            layout.is_free(task.start)
            and layout.is_free(task.goal)
            and components[task.start] != components[task.goal]
        ):
            violations.append(f"agent {i} goal {task.goal} is unreachable")
    return violations


# --- layout files -----------------------------------------------------------
#
# A layout file is the text grid plus a JSON sidecar holding name, family,
# variant, params, and optional default tasks. The sidecar shares the stem:
# foo.txt / foo.json.


def save_layout(
    layout: GridLayout, tasks: TaskSet | None, path: str | Path
) -> None:
    path = Path(path)
    path.write_text(layout.to_text() + "\n")
    sidecar = {
        "name": layout.name,
        "family": layout.family,
        "variant": layout.variant,
        "params": {k: v for k, v in layout.params.items()},
        "default_tasks": None
        if tasks is None
        else [
            {"start": list(t.start), "goal": list(t.goal)} for t in tasks
        ],
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_layout(path: str | Path) -> tuple[GridLayout, TaskSet | None]:
    path = Path(path)
    if not path.exists():
        raise LayoutError(f"layout file {path} does not exist")
    cells = grid_from_text(path.read_text())
    sidecar = path.with_suffix(".json")
    name, family, variant, params, tasks = path.stem, None, None, {}, None
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        name = meta.get("name", name)
        family = meta.get("family")
        variant = meta.get("variant")
        params = meta.get("params", {})
        raw = meta.get("default_tasks")
        if raw is not None:
            tasks = _tasks(
                *(
                    (tuple(entry["start"]), tuple(entry["goal"]))
                    for entry in raw
                )
            )
    layout = GridLayout(
        name=name, cells=cells, family=family, variant=variant, params=params
    )
    problems = validate_layout(layout, tasks)
    if problems:
        raise LayoutError(f"invalid layout file {path}: " + "; ".join(problems))
    return layout, tasks


_FAMILY_PREFIXES = ("rm1", "rm2", "rm3")


def resolve_layout(
    spec: str, variant: str | None = None, **params
) -> tuple[GridLayout, TaskSet | None]:
    """Resolve a CLI-style layout reference: family id or file path."""
    lowered = spec.strip().lower().replace("_", ".")
    if lowered in _BUILDERS:
        return build_layout(lowered, variant, **params)
    if any(lowered.startswith(p) for p in _FAMILY_PREFIXES) and not Path(
        spec
    ).exists():
        raise LayoutError(f"unknown layout family {spec!r}")
    if variant is not None:
        raise LayoutError("--variant only applies to family ids, not files")
    return load_layout(spec)
