"""Command line front end: solve, bench, sweep, deadlock, oracle, serve."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bench import (
    BenchmarkSpec,
    ReplayMismatchError,
    accumulate_heatmap,
    default_base_seed,
    export_results,
    export_sweep,
    render_heatmap,
    replay_solution,
    run_benchmark,
    scalability_sweep,
)
from .deadlock import BankersState, is_safe
from .grid import COLLISION_MODELS, GridError
from .layouts import GridLayout, TaskSet, resolve_layout, sample_tasks
from .protocol import serve_stdio, serve_tcp
from .solvers import SOLVERS, SolverBudget, solve
from .solvers.oracle import OracleCapacityError, joint_bfs_oracle


class CliError(Exception):
    """Recoverable command failure; message goes to stderr, exit code 1."""


def _tasks_for(
    layout: GridLayout, defaults: TaskSet | None, n_agents: int, seed: int
) -> TaskSet:
    """The layout's own tasks when the count matches, else a seeded sample."""
    if defaults is not None and len(defaults) == n_agents:
        return defaults
    return sample_tasks(layout, n_agents, np.random.default_rng(seed))


def _results_format(path: str) -> str:
    return "json" if Path(path).suffix == ".json" else "csv"


def _heatmap_format(path: str) -> str:
    return "pgm" if Path(path).suffix == ".pgm" else "csv"


def _parse_agent_range(text: str) -> tuple[int, ...]:
    """"2..12" -> (2, ..., 12); a bare "4" is the one-count range."""
    lo, sep, hi = text.partition("..")
    try:
        low = int(lo)
        high = int(hi) if sep else low
    except ValueError:
        raise CliError(f"bad agent range {text!r}, expected LO..HI") from None
    if low < 1 or high < low:
        raise CliError(f"bad agent range {text!r}, expected 1 <= LO <= HI")
    return tuple(range(low, high + 1))


def _split_algos(text: str) -> tuple[str, ...]:
    names = tuple(name.strip() for name in text.split(",") if name.strip())
    if not names:
        raise CliError("--algos needs at least one name")
    return names


def _cmd_solve(args) -> int:
    layout, defaults = resolve_layout(args.layout, args.variant)
    seed = args.seed if args.seed is not None else default_base_seed()
    tasks = _tasks_for(layout, defaults, args.agents, seed)
    options = {}
    if args.collision == "strict" and args.algo == "ma-astar":
        options["forbid_following"] = True
    solution = solve(
        args.algo,
        layout,
        tasks,
        SolverBudget(wall_ms=args.budget_ms),
        **options,
    )
    if solution.status == "solved":
        try:
            replay_solution(
                layout, tasks, solution, collision_model=args.collision
            )
        except ReplayMismatchError as exc:
            raise CliError(
                f"plan fails {args.collision} replay: {exc}"
            ) from exc
    Path(args.out).write_text(solution.to_json() + "\n")
    print(
        f"{solution.status} makespan={solution.makespan} "
        f"sum_of_costs={solution.sum_of_costs} "
        f"expansions={solution.expansions} wall_ms={solution.wall_ms:.3f}"
    )
    return 0


def _print_summaries(summaries) -> None:
    for name, s in summaries.items():
        median = "-" if s.median_timesteps is None else f"{s.median_timesteps:g}"
        print(
            f"{name}: success {s.successes}/{s.episodes} "
            f"({s.success_rate:.0%}), median timesteps {median}, "
            f"mean wall {s.mean_wall_ms:.1f} ms"
        )


def _progress(done: int, total: int) -> None:
    print(f"instance {done}/{total}", file=sys.stderr, flush=True)


def _cmd_bench(args) -> int:
    spec = BenchmarkSpec(
        layout=args.layout,
        variant=args.variant,
        n_agents=args.agents,
        episodes=args.episodes,
        algorithms=_split_algos(args.algos),
        base_seed=args.seed,
        budget=SolverBudget(wall_ms=args.budget_ms),
        jobs=args.jobs,
    )
    episodes = []
    sink = None
    if args.heatmap:
        sink = lambda record, trace: episodes.append(trace)  # noqa: E731
    records, summaries = run_benchmark(
        spec, progress=_progress, episode_sink=sink
    )
    export_results(records, _results_format(args.out), args.out)
    if args.heatmap:
        layout, _ = resolve_layout(args.layout, args.variant)
        heatmap = accumulate_heatmap(
            layout, [t for t in episodes if t is not None]
        )
        render_heatmap(heatmap, _heatmap_format(args.heatmap), args.heatmap)
        print(
            f"heat map: {heatmap.episodes} episodes, "
            f"{heatmap.total} visits -> {args.heatmap}"
        )
    _print_summaries(summaries)
    print(f"{len(records)} records -> {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    counts = _parse_agent_range(args.agents)
    spec = BenchmarkSpec(
        layout=args.layout,
        variant=args.variant,
        n_agents=counts[0],
        episodes=args.episodes,
        algorithms=_split_algos(args.algos),
        base_seed=args.seed,
        budget=SolverBudget(wall_ms=args.budget_ms),
        jobs=args.jobs,
    )
    rows = scalability_sweep(spec, counts)
    export_sweep(rows, args.out)
    for row in rows:
        print(
            f"agents {row['n_agents']}, {row['algorithm']}: "
            f"success {row['successes']}/{row['episodes']}"
        )
    print(f"{len(rows)} rows -> {args.out}")
    return 0


def _cmd_deadlock_check(args) -> int:
    try:
        data = json.loads(Path(args.file).read_text())
    except OSError as exc:
        raise CliError(f"cannot read {args.file}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.file} is not valid JSON: {exc}") from exc
    try:
        state = BankersState.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad banker state: {exc}") from exc
    safe, order = is_safe(state)
    if safe:
        print("safe " + " ".join(str(p) for p in order))
    else:
        print("unsafe")
    return 0


def _cmd_oracle(args) -> int:
    layout, defaults = resolve_layout(args.layout, args.variant)
    seed = args.seed if args.seed is not None else default_base_seed()
    tasks = _tasks_for(layout, defaults, args.agents, seed)
    try:
        result = joint_bfs_oracle(layout.cells, tasks)
    except OracleCapacityError as exc:
        raise CliError(str(exc)) from exc
    if result.status == "solvable":
        print(
            f"solvable makespan={result.optimal_makespan} "
            f"sum_of_costs={result.optimal_sum_of_costs}"
        )
    else:
        print("infeasible")
    return 0


def _cmd_serve(args) -> int:
    try:
        if args.stdio:
            serve_stdio(layout_dir=args.layout_dir)
        else:
            serve_tcp(args.tcp, layout_dir=args.layout_dir)
    except KeyboardInterrupt:
        pass
    except OSError as exc:
        raise CliError(f"cannot serve: {exc}") from exc
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridlock",
        description="Grid MAPF benchmark suite: solvers, metrics, protocol.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_layout(p):
        p.add_argument(
            "--layout", required=True, help="family id (rm2.1) or a file path"
        )
        p.add_argument("--variant", default=None)

    def add_budget(p):
        p.add_argument("--budget-ms", type=float, default=60_000.0)

    solve_p = sub.add_parser("solve", help="plan one instance and save it")
    add_layout(solve_p)
    solve_p.add_argument("--agents", type=int, required=True)
    solve_p.add_argument("--algo", choices=sorted(SOLVERS), required=True)
    solve_p.add_argument("--seed", type=int, default=None)
    add_budget(solve_p)
    solve_p.add_argument(
        "--collision", choices=sorted(COLLISION_MODELS), default="standard"
    )
    solve_p.add_argument("--out", required=True)
    solve_p.set_defaults(run=_cmd_solve)

    bench_p = sub.add_parser("bench", help="run seeded instances and export")
    add_layout(bench_p)
    bench_p.add_argument("--agents", type=int, required=True)
    bench_p.add_argument("--episodes", type=int, required=True)
    bench_p.add_argument("--algos", required=True, help="comma separated")
    bench_p.add_argument("--seed", type=int, default=None)
    add_budget(bench_p)
    bench_p.add_argument("--out", required=True)
    bench_p.add_argument("--heatmap", default=None, help="heat.csv or heat.pgm")
    bench_p.add_argument("--jobs", type=int, default=1)
    bench_p.set_defaults(run=_cmd_bench)

    sweep_p = sub.add_parser("sweep", help="bench across an agent range")
    add_layout(sweep_p)
    sweep_p.add_argument("--agents", required=True, help="LO..HI")
    sweep_p.add_argument("--episodes", type=int, required=True)
    sweep_p.add_argument("--algos", required=True, help="comma separated")
    sweep_p.add_argument("--seed", type=int, default=None)
    add_budget(sweep_p)
    sweep_p.add_argument("--out", required=True)
    sweep_p.add_argument("--jobs", type=int, default=1)
    sweep_p.set_defaults(run=_cmd_sweep)

    deadlock_p = sub.add_parser("deadlock", help="deadlock theory tools")
    deadlock_sub = deadlock_p.add_subparsers(dest="subcommand", required=True)
    check_p = deadlock_sub.add_parser(
        "check", help="banker's safety verdict for a JSON state"
    )
    check_p.add_argument("--file", required=True)
    check_p.set_defaults(run=_cmd_deadlock_check)

    oracle_p = sub.add_parser(
        "oracle", help="exact joint-BFS optimum for a small instance"
    )
    add_layout(oracle_p)
    oracle_p.add_argument("--agents", type=int, required=True)
    oracle_p.add_argument("--seed", type=int, default=None)
    oracle_p.set_defaults(run=_cmd_oracle)

    serve_p = sub.add_parser("serve", help="serve episodes over the protocol")
    endpoint = serve_p.add_mutually_exclusive_group(required=True)
    endpoint.add_argument("--stdio", action="store_true")
    endpoint.add_argument("--tcp", type=int, metavar="PORT")
    serve_p.add_argument("--layout-dir", default=None)
    serve_p.set_defaults(run=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except BrokenPipeError:
        # downstream consumer (head, less) closed the pipe; not our error
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0
    except (CliError, GridError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
