"""Benchmark harness: seeded instances, budgeted runs, summaries, heat maps.

An instance is a sampled task set on one layout; instance i always uses
seed base_seed + i, so runs are reproducible and algorithms compete on
identical tasks. Solver plans are validated and replayed through the
episode engine before they count as successes; policy episodes are
rolled out directly. Wall-clock fields are measured and therefore exempt
from the otherwise exact determinism of repeated runs.
"""

from __future__ import annotations

import csv
import json
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .deadlock import DeadlockMonitor
from .engine import (
    EpisodeConfig,
    EpisodeState,
    JointAction,
    Trace,
    observe_all,
    random_policy,
    run_episode,
)
from .grid import (
    COLLISION_MODELS,
    DELTAS,
    GridLayout,
    Position,
    apply_action,
    arrival_time,
)
from .layouts import TaskSet, resolve_layout, sample_tasks
from .protocol import decode_actions, encode_observation
from .solvers import SOLVERS, Solution, SolverBudget, solve

RECORD_STATUSES = ("success", "timeout", "infeasible", "truncated")
CSV_COLUMNS = (
    "instance",
    "seed",
    "algorithm",
    "status",
    "timesteps",
    "sum_of_costs",
    "wall_ms",
    "collisions",
    "deadlock",
)
SWEEP_COLUMNS = (
    "n_agents",
    "algorithm",
    "episodes",
    "successes",
    "success_rate",
    "median_timesteps",
    "mean_wall_ms",
)
EXTERNAL_PREFIX = "external:"

_ACTION_OF_DELTA = {delta: action for action, delta in enumerate(DELTAS)}


def default_base_seed() -> int:
    """Base seed 42 unless MAPF_SEED overrides it."""
    raw = os.environ.get("MAPF_SEED")
    if raw is None:
        return 42
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"MAPF_SEED must be an integer, got {raw!r}") from None


def known_algorithm(name: str) -> bool:
    return name in SOLVERS or name == "random" or (
        name.startswith(EXTERNAL_PREFIX) and len(name) > len(EXTERNAL_PREFIX)
    )


@dataclass(frozen=True)
class BenchmarkSpec:
    """What to run: one layout, one agent count, seeded instances.

    Algorithms are solver names from SOLVERS, "random", or
    "external:<command>" for a policy subprocess (see ExternalPolicy).
    """

    layout: str
    n_agents: int
    episodes: int
    algorithms: tuple[str, ...]
    variant: str | None = None
    base_seed: int | None = None  # None resolves through default_base_seed
    budget: SolverBudget = field(default_factory=SolverBudget)
    collision_model: str = "standard"
    t_max: int = 100
    mask_actions: bool = True  # applies to policy rollouts only
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.n_agents < 1:
            raise ValueError("n_agents must be positive")
        if self.episodes < 1:
            raise ValueError("episodes must be positive")
        if not self.algorithms:
            raise ValueError("at least one algorithm is required")
        for name in self.algorithms:
            if not known_algorithm(name):
                raise ValueError(f"unknown algorithm {name!r}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ValueError("duplicate algorithm")
        if self.collision_model not in COLLISION_MODELS:
            raise ValueError(f"unknown collision model {self.collision_model!r}")
        if self.t_max < 1:
            raise ValueError("t_max must be positive")
        if self.budget.horizon > self.t_max:
            raise ValueError("budget horizon cannot exceed t_max")
        if self.jobs < 1:
            raise ValueError("jobs must be positive")
        if self.base_seed is None:
            object.__setattr__(self, "base_seed", default_base_seed())


@dataclass(frozen=True)
class RunRecord:
    instance: int
    seed: int
    algorithm: str
    status: str
    timesteps: int | None
    sum_of_costs: int | None
    wall_ms: float
    collisions: int
    deadlock: bool

    def __post_init__(self) -> None:
        if self.status not in RECORD_STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if (self.status == "success") != (self.timesteps is not None):
            raise ValueError("timesteps exactly on success")


@dataclass(frozen=True)
class AlgorithmSummary:
    algorithm: str
    episodes: int
    successes: int
    success_rate: float
    median_timesteps: float | None
    q1_timesteps: float | None
    q3_timesteps: float | None
    whisker_low: float | None  # Tukey: extreme points within 1.5 IQR
    whisker_high: float | None
    mean_wall_ms: float


@dataclass(frozen=True)
class HeatMap:
    counts: np.ndarray  # per-cell visit totals, walls stay zero
    episodes: int  # successful episodes aggregated

    @property
    def total(self) -> int:
        return int(self.counts.sum())


class ReplayMismatchError(RuntimeError):
    """A solver plan failed validation or engine replay; solver bug."""


def _deadlock_observer(
    config: EpisodeConfig, monitor: DeadlockMonitor
) -> Callable[[EpisodeState, JointAction], None]:
    """Adapt the engine's (state, actions) hook to the monitor's intents."""

    def observer(state: EpisodeState, actions: JointAction) -> None:
        intents = {}
        for agent in config.agents:
            pos = state.position_of(agent)
            outcome = apply_action(config.layout.cells, pos, actions[agent])
            intents[agent] = pos if outcome.blocked else outcome.position
        monitor.observe(state, intents)

    return observer


# --- solution replay ----------------------------------------------------------


def _padded_paths(
    paths: Mapping[int, Sequence[Position]], span: int
) -> dict[int, list[Position]]:
    return {
        a: list(p) + [p[-1]] * (span - (len(p) - 1))
        for a, p in paths.items()
    }


def solution_actions(solution: Solution) -> list[JointAction]:
    """Joint actions replaying a solved plan, arrived agents staying."""
    if solution.paths is None:
        raise ValueError("only solved solutions can be replayed")
    padded = _padded_paths(solution.paths, solution.makespan)
    steps = []
    for t in range(solution.makespan):
        actions: JointAction = {}
        for agent, path in padded.items():
            (x0, y0), (x1, y1) = path[t], path[t + 1]
            delta = (x1 - x0, y1 - y0)
            if delta not in _ACTION_OF_DELTA:
                raise ReplayMismatchError(
                    f"agent {agent} jumps {path[t]} -> {path[t + 1]} at t={t}"
                )
            actions[agent] = _ACTION_OF_DELTA[delta]
        steps.append(actions)
    return steps


def replay_solution(
    layout: GridLayout,
    tasks: TaskSet,
    solution: Solution,
    collision_model: str = "standard",
    t_max: int = 100,
    seed: int | None = None,
) -> tuple[EpisodeState, Trace, DeadlockMonitor]:
    """Execute a solved plan in the episode engine and check consistency.

    The episode must terminate with every agent's return exactly 1.5, or
    the solver produced a plan the engine disagrees with.
    """
    for agent, task in enumerate(tasks, start=1):
        path = solution.paths.get(agent)
        if not path or path[0] != task.start or path[-1] != task.goal:
            raise ReplayMismatchError(f"agent {agent} path endpoints wrong")
    script = solution_actions(solution)
    config = EpisodeConfig(
        layout=layout,
        n_agents=len(tasks),
        tasks=tasks,
        t_max=t_max,
        collision_model=collision_model,
    )
    monitor = DeadlockMonitor()

    def policy(cfg, state, rng):
        return script[state.t]

    state, trace = run_episode(
        config, policy, seed=seed, observer=_deadlock_observer(config, monitor)
    )
    expected = 1.5 * len(tasks)
    if not state.terminated or trace.episode_reward() != expected:
        raise ReplayMismatchError(
            f"replay ended terminated={state.terminated} "
            f"reward={trace.episode_reward()} (wanted {expected})"
        )
    return state, trace, monitor


# --- per-instance execution -----------------------------------------------------


def _trace_collisions(trace: Trace) -> int:
    return sum(len(entry.collisions) for entry in trace.steps)


def _trace_paths(trace: Trace) -> dict[int, list[Position]]:
    paths = {
        agent: [task.start] for agent, task in enumerate(trace.tasks, start=1)
    }
    for entry in trace.steps:
        for agent, pos in entry.positions.items():
            paths[agent].append(pos)
    return paths


def _run_solver(layout, spec, instance, seed, tasks, algorithm):
    solution = solve(algorithm, layout, tasks, spec.budget)
    wall_ms = round(solution.wall_ms, 3)
    if solution.status != "solved":
        return RunRecord(
            instance=instance,
            seed=seed,
            algorithm=algorithm,
            status=solution.status,
            timesteps=None,
            sum_of_costs=None,
            wall_ms=wall_ms,
            collisions=0,
            deadlock=False,
        ), None
    _, trace, monitor = replay_solution(
        layout,
        tasks,
        solution,
        collision_model=spec.collision_model,
        t_max=spec.t_max,
        seed=seed,
    )
    return RunRecord(
        instance=instance,
        seed=seed,
        algorithm=algorithm,
        status="success",
        timesteps=solution.makespan,
        sum_of_costs=solution.sum_of_costs,
        wall_ms=wall_ms,
        collisions=_trace_collisions(trace),
        deadlock=monitor.first_report is not None,
    ), trace


def _run_policy(layout, spec, instance, seed, tasks, algorithm):
    config = EpisodeConfig(
        layout=layout,
        n_agents=len(tasks),
        tasks=tasks,
        t_max=spec.t_max,
        collision_model=spec.collision_model,
        mask_actions=spec.mask_actions,
    )
    monitor = DeadlockMonitor()
    if algorithm == "random":
        policy = random_policy
        cleanup = None
    else:
        external = ExternalPolicy(
            algorithm[len(EXTERNAL_PREFIX):], config, instance, seed
        )
        policy = external
        cleanup = external.close
    start = time.perf_counter()
    try:
        state, trace = run_episode(
            config,
            policy,
            seed=seed,
            observer=_deadlock_observer(config, monitor),
        )
    finally:
        if cleanup is not None:
            cleanup()
    wall_ms = round((time.perf_counter() - start) * 1000.0, 3)
    deadlock = monitor.first_report is not None
    collisions = _trace_collisions(trace)
    if not state.terminated:
        return RunRecord(
            instance=instance,
            seed=seed,
            algorithm=algorithm,
            status="truncated",
            timesteps=None,
            sum_of_costs=None,
            wall_ms=wall_ms,
            collisions=collisions,
            deadlock=deadlock,
        ), trace
    paths = _trace_paths(trace)
    return RunRecord(
        instance=instance,
        seed=seed,
        algorithm=algorithm,
        status="success",
        timesteps=state.t,
        sum_of_costs=sum(arrival_time(p) for p in paths.values()),
        wall_ms=wall_ms,
        collisions=collisions,
        deadlock=deadlock,
    ), trace


class ExternalPolicy:
    """Joint-action policy served by a subprocess, one JSON line per turn.

    Handshake: on spawn the runner sends
      {"cmd": "reset", "instance": i, "seed": s, "n_agents": n,
       "layout": name, "tasks": [[[sx,sy],[gx,gy]], ...]}
    and expects {"ok": true}. Each turn it sends
      {"cmd": "act", "t": t, "obs": {agent: encoded observation}}
    and expects {"actions": {"1": code, ...}} using the wire protocol's
    observation and action encodings. {"cmd": "close"} ends the exchange.
    """

    def __init__(self, command: str, config: EpisodeConfig, instance, seed):
        self._config = config
        self._proc = subprocess.Popen(
            command,
            shell=True,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )
        reply = self._exchange(
            {
                "cmd": "reset",
                "instance": instance,
                "seed": seed,
                "n_agents": config.n_agents,
                "layout": config.layout.name,
                "tasks": [
                    [list(t.start), list(t.goal)] for t in config.tasks
                ],
            }
        )
        if not reply.get("ok"):
            raise RuntimeError(f"external policy refused reset: {reply}")

    def __call__(self, config, state, rng) -> JointAction:
        observations = observe_all(config, state)
        reply = self._exchange(
            {
                "cmd": "act",
                "t": state.t,
                "obs": {
                    str(agent): encode_observation(obs)
                    for agent, obs in sorted(observations.items())
                },
            }
        )
        if "actions" not in reply:
            raise RuntimeError(f"external policy sent no actions: {reply}")
        return decode_actions(reply["actions"])

    def _exchange(self, message: dict) -> dict:
        self._proc.stdin.write(json.dumps(message, sort_keys=True) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError("external policy closed its output")
        return json.loads(line)

    def close(self) -> None:
        try:
            if self._proc.poll() is None:
                self._proc.stdin.write('{"cmd": "close"}\n')
                self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            pass
        finally:
            self._proc.terminate()
            self._proc.wait(timeout=5)


def _instance_pairs(layout: GridLayout, spec: BenchmarkSpec, instance: int):
    """(record, episode) per algorithm; episode is a Trace when one exists."""
    seed = spec.base_seed + instance
    tasks = sample_tasks(layout, spec.n_agents, np.random.default_rng(seed))
    pairs = []
    for algorithm in spec.algorithms:
        runner = _run_solver if algorithm in SOLVERS else _run_policy
        pairs.append(runner(layout, spec, instance, seed, tasks, algorithm))
    return pairs


def run_instance(layout: GridLayout, spec: BenchmarkSpec, instance: int):
    """All algorithm records for one seeded instance, spec order."""
    return [record for record, _ in _instance_pairs(layout, spec, instance)]


def _worker(spec: BenchmarkSpec, instance: int):
    layout, _ = resolve_layout(spec.layout, spec.variant)
    return _instance_pairs(layout, spec, instance)


def run_benchmark(
    spec: BenchmarkSpec,
    progress: Callable[[int, int], None] | None = None,
    episode_sink: Callable[[RunRecord, Trace | None], None] | None = None,
) -> tuple[list[RunRecord], dict[str, AlgorithmSummary]]:
    """Run every instance and summarize; records come in instance order.

    episode_sink, when given, receives every (record, trace) pair in that
    same order; solver runs that produced no plan pass trace=None. Heat
    maps aggregate these traces without rerunning anything.
    """
    records: list[RunRecord] = []

    def consume(pairs) -> None:
        for record, episode in pairs:
            records.append(record)
            if episode_sink is not None:
                episode_sink(record, episode)

    if spec.jobs == 1:
        layout, _ = resolve_layout(spec.layout, spec.variant)
        for instance in range(spec.episodes):
            consume(_instance_pairs(layout, spec, instance))
            if progress is not None:
                progress(instance + 1, spec.episodes)
    else:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            futures = [
                pool.submit(_worker, spec, instance)
                for instance in range(spec.episodes)
            ]
            for done, future in enumerate(futures):
                consume(future.result())
                if progress is not None:
                    progress(done + 1, spec.episodes)
    return records, summarize(records)


# --- summaries ------------------------------------------------------------------


def _tukey(values: Sequence[int]) -> tuple[float, float, float, float, float]:
    data = np.asarray(values, dtype=float)
    q1, median, q3 = np.percentile(data, [25, 50, 75])
    iqr = q3 - q1
    low = float(data[data >= q1 - 1.5 * iqr].min())
    high = float(data[data <= q3 + 1.5 * iqr].max())
    return float(median), float(q1), float(q3), low, high


def summarize(records: Iterable[RunRecord]) -> dict[str, AlgorithmSummary]:
    """Per-algorithm success rate, timestep box stats, mean wall time."""
    by_algorithm: dict[str, list[RunRecord]] = {}
    for record in records:
        by_algorithm.setdefault(record.algorithm, []).append(record)
    summaries = {}
    for algorithm, group in by_algorithm.items():
        steps = [r.timesteps for r in group if r.status == "success"]
        if steps:
            median, q1, q3, low, high = _tukey(steps)
        else:
            median = q1 = q3 = low = high = None
        summaries[algorithm] = AlgorithmSummary(
            algorithm=algorithm,
            episodes=len(group),
            successes=len(steps),
            success_rate=len(steps) / len(group),
            median_timesteps=median,
            q1_timesteps=q1,
            q3_timesteps=q3,
            whisker_low=low,
            whisker_high=high,
            mean_wall_ms=float(np.mean([r.wall_ms for r in group])),
        )
    return summaries


def scalability_sweep(
    spec: BenchmarkSpec,
    agent_counts: Sequence[int],
    progress: Callable[[int, int], None] | None = None,
) -> list[dict]:
    """run_benchmark per agent count; one summary row per (count, algo)."""
    counts = list(agent_counts)
    if not counts:
        raise ValueError("agent_counts must be non-empty")
    if counts != sorted(counts) or len(set(counts)) != len(counts):
        raise ValueError("agent_counts must be strictly ascending")
    if counts[0] < 1:
        raise ValueError("agent counts must be positive")
    rows = []
    for i, n in enumerate(counts):
        _, summaries = run_benchmark(replace(spec, n_agents=n))
        for algorithm in spec.algorithms:
            summary = summaries[algorithm]
            rows.append(
                {
                    "n_agents": n,
                    "algorithm": algorithm,
                    "episodes": summary.episodes,
                    "successes": summary.successes,
                    "success_rate": summary.success_rate,
                    "median_timesteps": summary.median_timesteps,
                    "mean_wall_ms": round(summary.mean_wall_ms, 3),
                }
            )
        if progress is not None:
            progress(i + 1, len(counts))
    return rows


# --- heat maps --------------------------------------------------------------------


def _trace_succeeded(trace: Trace) -> bool:
    if not trace.steps:
        return False
    final = trace.steps[-1].positions
    return all(
        final[agent] == task.goal
        for agent, task in enumerate(trace.tasks, start=1)
    )


def accumulate_heatmap(
    layout: GridLayout, episodes: Iterable[Trace | Solution]
) -> HeatMap:
    """Visit counts over successful episodes: +1 per agent per timestep.

    Accepts engine traces and solved Solutions (arrived agents keep
    occupying their goals). Episodes that did not succeed are skipped,
    so total = sum over counted episodes of (T_end + 1) * n.
    """
    counts = np.zeros_like(layout.cells, dtype=np.int64)
    counted = 0
    for episode in episodes:
        if isinstance(episode, Trace):
            if episode.layout_name != layout.name:
                raise ValueError(
                    f"trace for {episode.layout_name!r} mixed into "
                    f"{layout.name!r} heat map"
                )
            if not _trace_succeeded(episode):
                continue
            for task in episode.tasks:
                counts[task.start] += 1
            for entry in episode.steps:
                for pos in entry.positions.values():
                    counts[pos] += 1
        elif isinstance(episode, Solution):
            if episode.status != "solved":
                continue
            padded = _padded_paths(episode.paths, episode.makespan)
            for path in padded.values():
                for pos in path:
                    counts[pos] += 1
        else:
            raise TypeError(f"cannot aggregate {type(episode).__name__}")
        counted += 1
    if counts[layout.cells != 0].any():
        raise ValueError("visit recorded on a wall cell")
    return HeatMap(counts=counts, episodes=counted)


# --- file emission -----------------------------------------------------------------


def _open_for_write(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _record_row(record: RunRecord) -> dict:
    return {
        "instance": record.instance,
        "seed": record.seed,
        "algorithm": record.algorithm,
        "status": record.status,
        "timesteps": record.timesteps,
        "sum_of_costs": record.sum_of_costs,
        "wall_ms": record.wall_ms,
        "collisions": record.collisions,
        "deadlock": record.deadlock,
    }


def export_results(
    records: Sequence[RunRecord], fmt: str, path: str | Path
) -> None:
    """Write records as CSV (fixed column order) or a JSON array."""
    if fmt == "csv":
        with _open_for_write(path) as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_COLUMNS)
            for record in records:
                row = _record_row(record)
                writer.writerow(
                    [
                        "" if row[col] is None else
                        ("true" if row[col] is True else
                         "false" if row[col] is False else row[col])
                        for col in CSV_COLUMNS
                    ]
                )
    elif fmt == "json":
        with _open_for_write(path) as handle:
            json.dump([_record_row(r) for r in records], handle, indent=2)
            handle.write("\n")
    else:
        raise ValueError(f"unknown results format {fmt!r}")


def load_results(path: str | Path, fmt: str | None = None) -> list[RunRecord]:
    """Read records back; format inferred from the suffix unless given."""
    path = Path(path)
    if fmt is None:
        fmt = "json" if path.suffix == ".json" else "csv"
    if fmt == "csv":
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise ValueError(f"unexpected columns in {path}")
            rows = [
                {
                    **row,
                    "instance": int(row["instance"]),
                    "seed": int(row["seed"]),
                    "timesteps": int(row["timesteps"])
                    if row["timesteps"]
                    else None,
                    "sum_of_costs": int(row["sum_of_costs"])
                    if row["sum_of_costs"]
                    else None,
                    "wall_ms": float(row["wall_ms"]),
                    "collisions": int(row["collisions"]),
                    "deadlock": row["deadlock"] == "true",
                }
                for row in reader
            ]
    elif fmt == "json":
        rows = json.loads(Path(path).read_text())
    else:
        raise ValueError(f"unknown results format {fmt!r}")
    return [RunRecord(**row) for row in rows]


def export_sweep(rows: Sequence[dict], path: str | Path) -> None:
    with _open_for_write(path) as handle:
        writer = csv.DictWriter(handle, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            if out["median_timesteps"] is None:
                out["median_timesteps"] = ""
            writer.writerow(out)


def render_heatmap(heatmap: HeatMap, fmt: str, path: str | Path) -> None:
    """Emit counts as CSV rows or a plain (P2) PGM image."""
    counts = heatmap.counts
    if fmt == "csv":
        with _open_for_write(path) as handle:
            writer = csv.writer(handle)
            for row in counts:
                writer.writerow([int(v) for v in row])
    elif fmt == "pgm":
        height, width = counts.shape
        maxval = max(int(counts.max()), 1)
        with _open_for_write(path) as handle:
            handle.write(f"P2\n{width} {height}\n{maxval}\n")
            for row in counts:
                handle.write(" ".join(str(int(v)) for v in row) + "\n")
    else:
        raise ValueError(f"unknown heat map format {fmt!r}")
