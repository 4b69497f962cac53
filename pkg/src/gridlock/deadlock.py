"""Deadlock toolkit: resource-allocation graphs, Banker's algorithm, and an
episode-level detector that treats grid cells as single-instance resources.

Process and agent identifiers are 1-based throughout, matching the rest of
the package. Graph detection is conservative about multi-instance resource
types: a cycle through one is reported as "potential" because it is
necessary but not sufficient for a deadlock there.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .engine import EpisodeState
from .grid import Position


class AllocationCapacityError(ValueError):
    """Raised when allocations exceed a resource type's instance count."""


# --- resource allocation graphs ----------------------------------------------


@dataclass
class ResourceAllocationGraph:
    """Bipartite directed graph of processes and resource types.

    requests holds (process, resource) edges; allocations maps
    (resource, process) to the number of instances held, one allocation
    edge per unit. Process and resource ids must not overlap.
    """

    processes: tuple[str, ...]
    instances: dict[str, int]
    requests: frozenset[tuple[str, str]]
    allocations: dict[tuple[str, str], int]

    def __post_init__(self) -> None:
        self.processes = tuple(self.processes)
        self.instances = dict(self.instances)
        self.requests = frozenset(self.requests)
        self.allocations = dict(self.allocations)
        procs, resources = set(self.processes), set(self.instances)
        if len(procs) != len(self.processes):
            raise ValueError("duplicate process ids")
        if procs & resources:
            raise ValueError(f"ids used for both roles: {procs & resources}")
        for rid, count in self.instances.items():
            if count < 1:
                raise ValueError(f"resource {rid} must have >= 1 instances")
        for proc, rid in self.requests:
            if proc not in procs or rid not in resources:
                raise ValueError(f"request edge ({proc}, {rid}) off the graph")
        held: dict[str, int] = {}
        for (rid, proc), units in self.allocations.items():
            if proc not in procs or rid not in resources:
                raise ValueError(
                    f"allocation edge ({rid}, {proc}) off the graph"
                )
            if units < 1:
                raise ValueError("allocation units must be >= 1")
            held[rid] = held.get(rid, 0) + units
        for rid, units in held.items():
            if units > self.instances[rid]:
                raise AllocationCapacityError(
                    f"{units} instances of {rid} allocated, "
                    f"only {self.instances[rid]} exist"
                )

    def successors(self, node: str) -> list[str]:
        if node in self.instances:
            out = [p for (r, p) in self.allocations if r == node]
        else:
            out = [r for (p, r) in self.requests if p == node]
        return sorted(out)


@dataclass(frozen=True)
class CycleReport:
    """A closed alternating request/allocation walk.

    certainty is "definite" when every resource on the cycle is
    single-instance, else "potential".
    """

    nodes: tuple[str, ...]
    certainty: str


def detect_cycle(rag: ResourceAllocationGraph) -> CycleReport | None:
    """Find a directed cycle, if any, by DFS in sorted node order."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = {n: WHITE for n in rag.processes}
    color.update({r: WHITE for r in rag.instances})
    stack: list[str] = []

    def visit(node: str) -> tuple[str, ...] | None:
        color[node] = GREY
        stack.append(node)
        for succ in rag.successors(node):
            if color[succ] == GREY:
                return tuple(stack[stack.index(succ):])
            if color[succ] == WHITE:
                found = visit(succ)
                if found is not None:
                    return found
        stack.pop()
        color[node] = BLACK
        return None

    for start in sorted(color):
        if color[start] != WHITE:
            continue
        cycle = visit(start)
        if cycle is None:
            continue
        # canonical rotation: start at the smallest process on the cycle
        procs = [i for i, n in enumerate(cycle) if n in set(rag.processes)]
        pivot = min(procs, key=lambda i: cycle[i])
        cycle = cycle[pivot:] + cycle[:pivot]
        single = all(
            rag.instances[n] == 1 for n in cycle if n in rag.instances
        )
        return CycleReport(
            nodes=cycle, certainty="definite" if single else "potential"
        )
    return None


def rag_from_matrices(
    allocation: Sequence[Sequence[int]],
    request: Sequence[Sequence[int]],
    instances: Sequence[int],
) -> ResourceAllocationGraph:
    """Build the graph for n×m allocation/request matrices.

    One allocation edge per unit held, one request edge per nonzero entry.
    Processes are named P1..Pn, resource types R1..Rm.
    """
    alloc = np.asarray(allocation, dtype=np.int64)
    req = np.asarray(request, dtype=np.int64)
    counts = np.asarray(instances, dtype=np.int64)
    if alloc.ndim != 2 or alloc.shape != req.shape:
        raise ValueError("allocation and request matrices must share a shape")
    if counts.shape != (alloc.shape[1],):
        raise ValueError("instance vector length must match the columns")
    if (alloc < 0).any() or (req < 0).any() or (counts < 1).any():
        raise ValueError("matrix entries must be non-negative, instances >= 1")
    n, m = alloc.shape
    processes = tuple(f"P{i + 1}" for i in range(n))
    resources = {f"R{j + 1}": int(counts[j]) for j in range(m)}
    requests = frozenset(
        (f"P{i + 1}", f"R{j + 1}")
        for i in range(n)
        for j in range(m)
        if req[i, j]
    )
    allocations = {
        (f"R{j + 1}", f"P{i + 1}"): int(alloc[i, j])
        for i in range(n)
        for j in range(m)
        if alloc[i, j]
    }
    return ResourceAllocationGraph(processes, resources, requests, allocations)


def rag_to_matrices(
    rag: ResourceAllocationGraph,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of rag_from_matrices for P#/R# named graphs."""
    n, m = len(rag.processes), len(rag.instances)
    proc_index = {p: i for i, p in enumerate(rag.processes)}
    res_ids = sorted(rag.instances, key=lambda r: (len(r), r))
    res_index = {r: j for j, r in enumerate(res_ids)}
    alloc = np.zeros((n, m), dtype=np.int64)
    req = np.zeros((n, m), dtype=np.int64)
    for (rid, proc), units in rag.allocations.items():
        alloc[proc_index[proc], res_index[rid]] = units
    for proc, rid in rag.requests:
        req[proc_index[proc], res_index[rid]] = 1
    counts = np.array([rag.instances[r] for r in res_ids], dtype=np.int64)
    return alloc, req, counts


# --- Banker's algorithm -------------------------------------------------------


@dataclass(frozen=True)
class BankersState:
    available: np.ndarray
    max: np.ndarray
    allocation: np.ndarray

    def __post_init__(self) -> None:
        available = np.asarray(self.available, dtype=np.int64).copy()
        max_ = np.asarray(self.max, dtype=np.int64).copy()
        allocation = np.asarray(self.allocation, dtype=np.int64).copy()
        if max_.ndim != 2:
            raise ValueError("max must be an n×m matrix")
        n, m = max_.shape
        if allocation.shape != (n, m):
            raise ValueError("allocation shape must match max")
        if available.shape != (m,):
            raise ValueError("available length must match resource count")
        if (available < 0).any() or (max_ < 0).any() or (allocation < 0).any():
            raise ValueError("entries must be non-negative")
        if (max_ - allocation < 0).any():
            raise ValueError("allocation exceeds max somewhere")
        for arr in (available, max_, allocation):
            arr.setflags(write=False)
        object.__setattr__(self, "available", available)
        object.__setattr__(self, "max", max_)
        object.__setattr__(self, "allocation", allocation)

    @property
    def need(self) -> np.ndarray:
        return self.max - self.allocation

    @property
    def n_processes(self) -> int:
        return self.max.shape[0]

    @property
    def n_resources(self) -> int:
        return self.max.shape[1]

    def to_dict(self) -> dict:
        return {
            "available": self.available.tolist(),
            "max": self.max.tolist(),
            "allocation": self.allocation.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BankersState":
        try:
            return cls(
                available=data["available"],
                max=data["max"],
                allocation=data["allocation"],
            )
        except KeyError as missing:
            raise ValueError(f"missing field {missing} in state") from None


def is_safe(state: BankersState) -> tuple[bool, tuple[int, ...] | None]:
    """Greedy completion check; returns (safe, completion order).

    Scans processes in ascending id and restarts after every completion,
    so the returned order is the canonical lowest-id-first one. The
    verdict itself does not depend on scan order.
    """
    work = state.available.copy()
    need = state.need
    completed = np.zeros(state.n_processes, dtype=bool)
    order: list[int] = []
    progress = True
    while progress:
        progress = False
        for pid in range(state.n_processes):
            if not completed[pid] and (need[pid] <= work).all():
                work = work + state.allocation[pid]
                completed[pid] = True
                order.append(pid + 1)
                progress = True
                break
    if completed.all():
        return True, tuple(order)
    return False, None


@dataclass(frozen=True)
class GrantResult:
    status: str  # granted | denied-unsafe | denied-invalid
    state: BankersState
    order: tuple[int, ...] | None = None
    reason: str = ""


def grant_request(
    state: BankersState, process: int, request: Sequence[int]
) -> GrantResult:
    """Admit a resource request only if the resulting state stays safe.

    Requests beyond the process's declared need or beyond what is
    currently available are rejected as invalid; an admissible request
    that would leave the system unsafe is rejected with state unchanged.
    """
    if not 1 <= process <= state.n_processes:
        raise ValueError(f"unknown process id {process}")
    req = np.asarray(request, dtype=np.int64)
    if req.shape != (state.n_resources,):
        raise ValueError("request length must match resource count")
    if (req < 0).any():
        raise ValueError("request entries must be non-negative")
    row = process - 1
    if (req > state.need[row]).any():
        return GrantResult(
            "denied-invalid", state, reason="request exceeds declared need"
        )
    if (req > state.available).any():
        return GrantResult(
            "denied-invalid", state, reason="request exceeds available"
        )
    allocation = state.allocation.copy()
    allocation[row] += req
    tentative = BankersState(
        available=state.available - req,
        max=state.max,
        allocation=allocation,
    )
    safe, order = is_safe(tentative)
    if safe:
        return GrantResult("granted", tentative, order=order)
    return GrantResult(
        "denied-unsafe", state, reason="grant would leave no safe order"
    )


# --- episode-level detection --------------------------------------------------


@dataclass(frozen=True)
class DeadlockReport:
    agents: tuple[int, ...]
    wait_cycle: tuple[int, ...]  # closed: each member waits on the next
    detected_at: int
    reason: str  # "request-cycle" | "head-on"


def _cell(pos: Position) -> str:
    return f"c{pos[0]},{pos[1]}"


def _blocked_pairs(
    positions: Mapping[int, Position], intents: Mapping[int, Position]
) -> set[tuple[int, int]]:
    """Pairs that obstruct each other: both want to move, and each one's
    target is the other's cell or the other's target."""
    pairs = set()
    agents = sorted(positions)
    for idx, a in enumerate(agents):
        if intents[a] == positions[a]:
            continue
        for b in agents[idx + 1 :]:
            if intents[b] == positions[b]:
                continue
            a_stuck = intents[a] in (positions[b], intents[b])
            b_stuck = intents[b] in (positions[a], intents[a])
            if a_stuck and b_stuck:
                pairs.add((a, b))
    return pairs


def detect_episode_deadlock(
    state: EpisodeState,
    intents: Mapping[int, Position],
    window: int = 3,
    history: Sequence[tuple[dict[int, Position], dict[int, Position]]] = (),
) -> DeadlockReport | None:
    """Check one step for a deadlock among agents not on their goals.

    Each agent allocates the cell it stands on and requests the cell it
    intends to enter; a request cycle in that graph is a deadlock. A
    head-on block (two agents obstructing each other without a cycle,
    e.g. both claiming the same free cell between them) counts once it
    persists, positions unchanged, for `window` consecutive steps; the
    `history` holds the preceding (positions, intents) snapshots, newest
    last, as maintained by DeadlockMonitor.
    """
    goals = {i + 1: task.goal for i, task in enumerate(state.tasks)}
    active = [
        a
        for a in sorted(intents)
        if state.position_of(a) != goals[a]
    ]
    if not active:
        return None
    positions = {a: state.position_of(a) for a in active}

    cells = {_cell(positions[a]): 1 for a in active}
    cells.update({_cell(intents[a]): 1 for a in active})
    allocations = {(_cell(positions[a]), f"A{a}"): 1 for a in active}
    requests = frozenset(
        (f"A{a}", _cell(intents[a]))
        for a in active
        if intents[a] != positions[a]
    )
    rag = ResourceAllocationGraph(
        processes=tuple(f"A{a}" for a in active),
        instances=cells,
        requests=requests,
        allocations=allocations,
    )
    cycle = detect_cycle(rag)
    if cycle is not None:
        agents = tuple(
            int(node[1:]) for node in cycle.nodes if node.startswith("A")
        )
        return DeadlockReport(
            agents=agents,
            wait_cycle=agents,
            detected_at=state.t,
            reason="request-cycle",
        )

    if window <= 1 or len(history) >= window - 1:
        recent = [] if window <= 1 else list(history)[-(window - 1):]
        blocked = _blocked_pairs(positions, {a: intents[a] for a in active})
        for a, b in sorted(blocked):
            persistent = all(
                (a, b) in _blocked_pairs(past_pos, past_int)
                and past_pos[a] == positions[a]
                and past_pos[b] == positions[b]
                for past_pos, past_int in recent
            )
            if persistent:
                return DeadlockReport(
                    agents=(a, b),
                    wait_cycle=(a, b),
                    detected_at=state.t,
                    reason="head-on",
                )
    return None


class DeadlockMonitor:
    """Per-episode observer feeding detect_episode_deadlock step by step.

    Never alters dynamics; call observe() once per step with the cells
    the agents tried to enter (wall bumps resolve to the current cell).
    """

    def __init__(self, window: int = 3):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._history: deque = deque(maxlen=max(window - 1, 0))
        self.first_report: DeadlockReport | None = None

    def observe(
        self, state: EpisodeState, intents: Mapping[int, Position]
    ) -> DeadlockReport | None:
        report = detect_episode_deadlock(
            state, intents, window=self.window, history=tuple(self._history)
        )
        if report is not None and self.first_report is None:
            self.first_report = report
        positions = {a: state.position_of(a) for a in sorted(intents)}
        if self.window > 1:
            self._history.append((positions, dict(intents)))
        return report

    def reset(self) -> None:
        self._history.clear()
        self.first_report = None
