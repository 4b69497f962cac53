"""Benchmark harness tests: records, replay, summaries, heat maps, exports."""

import os
import shlex
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from gridlock.bench import (
    CSV_COLUMNS,
    SWEEP_COLUMNS,
    BenchmarkSpec,
    HeatMap,
    ReplayMismatchError,
    RunRecord,
    accumulate_heatmap,
    default_base_seed,
    export_results,
    export_sweep,
    known_algorithm,
    load_results,
    render_heatmap,
    replay_solution,
    run_benchmark,
    run_instance,
    scalability_sweep,
    solution_actions,
    summarize,
)
from gridlock.engine import EpisodeConfig, random_policy, run_episode
from gridlock.layouts import build_layout, sample_tasks
from gridlock.solvers import Solution, SolverBudget, solve_cbs

SMALL_BUDGET = SolverBudget(wall_ms=10_000.0)


def small_spec(**overrides):
    base = dict(
        layout="rm2.1",
        variant="block",
        n_agents=2,
        episodes=3,
        algorithms=("cbs", "ma-astar", "random"),
        base_seed=42,
        budget=SMALL_BUDGET,
    )
    base.update(overrides)
    return BenchmarkSpec(**base)


def comparable(record):
    """Everything but wall_ms, which is measured and never reproducible."""
    return (
        record.instance,
        record.seed,
        record.algorithm,
        record.status,
        record.timesteps,
        record.sum_of_costs,
        record.collisions,
        record.deadlock,
    )


class TestSpecValidation:
    def test_rejects_zero_agents(self):
        with pytest.raises(ValueError, match="n_agents"):
            small_spec(n_agents=0)

    def test_rejects_zero_episodes(self):
        with pytest.raises(ValueError, match="episodes"):
            small_spec(episodes=0)

    def test_rejects_empty_algorithms(self):
        with pytest.raises(ValueError, match="algorithm"):
            small_spec(algorithms=())

    def test_rejects_unknown_algorithm(self):
        with pytest.raises(ValueError, match="unknown algorithm"):
            small_spec(algorithms=("dijkstra",))

    def test_rejects_duplicate_algorithm(self):
        with pytest.raises(ValueError, match="duplicate"):
            small_spec(algorithms=("cbs", "cbs"))

    def test_rejects_bad_collision_model(self):
        with pytest.raises(ValueError, match="collision model"):
            small_spec(collision_model="lenient")

    def test_rejects_horizon_past_t_max(self):
        with pytest.raises(ValueError, match="horizon"):
            small_spec(budget=SolverBudget(horizon=50), t_max=40)

    def test_rejects_zero_jobs(self):
        with pytest.raises(ValueError, match="jobs"):
            small_spec(jobs=0)

    def test_external_names_are_known(self):
        assert known_algorithm("external:cat")
        assert not known_algorithm("external:")
        assert not known_algorithm("greedy")

    def test_default_seed_comes_from_environment(self):
        code = (
            "import gridlock.bench as b;"
            "print(b.default_base_seed(), b.BenchmarkSpec("
            "layout='rm1.1', n_agents=2, episodes=1,"
            "algorithms=('random',)).base_seed)"
        )
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={**os.environ, "MAPF_SEED": "777"},
            capture_output=True,
            text=True,
            check=True,
        )
        assert out.stdout.split() == ["777", "777"]

    def test_default_seed_is_42_without_override(self):
        env = {k: v for k, v in os.environ.items() if k != "MAPF_SEED"}
        out = subprocess.run(
            [sys.executable, "-c",
             "import gridlock.bench as b; print(b.default_base_seed())"],
            env=env,
            capture_output=True,
            text=True,
            check=True,
        )
        assert out.stdout.strip() == "42"

    def test_garbage_seed_env_is_an_error(self, monkeypatch):
        monkeypatch.setenv("MAPF_SEED", "many")
        with pytest.raises(ValueError, match="MAPF_SEED"):
            default_base_seed()


class TestRunRecord:
    def test_success_requires_timesteps(self):
        with pytest.raises(ValueError, match="timesteps"):
            RunRecord(
                instance=0, seed=42, algorithm="cbs", status="success",
                timesteps=None, sum_of_costs=None, wall_ms=1.0,
                collisions=0, deadlock=False,
            )

    def test_failure_forbids_timesteps(self):
        with pytest.raises(ValueError, match="timesteps"):
            RunRecord(
                instance=0, seed=42, algorithm="cbs", status="timeout",
                timesteps=9, sum_of_costs=None, wall_ms=1.0,
                collisions=0, deadlock=False,
            )

    def test_unknown_status_rejected(self):
        with pytest.raises(ValueError, match="status"):
            RunRecord(
                instance=0, seed=42, algorithm="cbs", status="crashed",
                timesteps=None, sum_of_costs=None, wall_ms=1.0,
                collisions=0, deadlock=False,
            )


class TestSolutionReplay:
    def solved(self):
        layout, tasks = build_layout("rm1.1", "basic")
        solution = solve_cbs(layout, tasks, budget=SMALL_BUDGET)
        assert solution.status == "solved"
        return layout, tasks, solution

    def test_solution_actions_reproduce_paths(self):
        layout, tasks, solution = self.solved()
        script = solution_actions(solution)
        assert len(script) == solution.makespan
        state, trace = run_episode(
            EpisodeConfig(layout=layout, n_agents=len(tasks), tasks=tasks),
            lambda cfg, st, rng: script[st.t],
        )
        assert state.terminated
        assert trace.episode_reward() == 1.5 * len(tasks)

    def test_replay_returns_full_reward(self):
        layout, tasks, solution = self.solved()
        state, trace, monitor = replay_solution(layout, tasks, solution)
        assert state.terminated
        assert trace.episode_reward() == 1.5 * len(tasks)
        assert monitor.first_report is None

    def test_teleporting_path_is_a_mismatch(self):
        layout, tasks, solution = self.solved()
        broken = dict(solution.paths)
        path = list(broken[1])
        path[1] = path[-1]  # jump straight to the goal
        broken[1] = tuple(path)
        with pytest.raises(ReplayMismatchError, match="jump"):
            solution_actions(replace(solution, paths=broken))

    def test_wrong_endpoints_are_a_mismatch(self):
        layout, tasks, solution = self.solved()
        swapped = {1: solution.paths[2], 2: solution.paths[1]}
        with pytest.raises(ReplayMismatchError, match="endpoints"):
            replay_solution(layout, tasks, replace(solution, paths=swapped))

    def test_unsolved_solution_cannot_be_replayed(self):
        layout, tasks, solution = self.solved()
        with pytest.raises(ValueError, match="solved"):
            solution_actions(replace(solution, status="timeout", paths=None))


class TestRunBenchmark:
    def test_records_cover_every_instance_and_algorithm(self):
        spec = small_spec()
        records, summaries = run_benchmark(spec)
        assert len(records) == spec.episodes * len(spec.algorithms)
        expected = [
            (i, spec.base_seed + i, algo)
            for i in range(spec.episodes)
            for algo in spec.algorithms
        ]
        assert [(r.instance, r.seed, r.algorithm) for r in records] == expected
        assert set(summaries) == set(spec.algorithms)

    def test_solvers_succeed_and_random_does_not(self):
        records, summaries = run_benchmark(small_spec())
        assert summaries["cbs"].success_rate == 1.0
        assert summaries["ma-astar"].success_rate == 1.0
        assert summaries["random"].success_rate == 0.0

    def test_cbs_cost_never_exceeds_ma_astar(self):
        # CBS optimizes sum of costs, MA-A* optimizes makespan.
        records, _ = run_benchmark(small_spec(algorithms=("cbs", "ma-astar")))
        by_key = {(r.instance, r.algorithm): r for r in records}
        for i in range(3):
            cbs = by_key[(i, "cbs")]
            ma = by_key[(i, "ma-astar")]
            assert cbs.sum_of_costs <= ma.sum_of_costs
            assert ma.timesteps <= cbs.timesteps

    def test_repeat_runs_identical_except_wall_ms(self):
        spec = small_spec()
        first, _ = run_benchmark(spec)
        second, _ = run_benchmark(spec)
        assert [comparable(r) for r in first] == [comparable(r) for r in second]

    def test_worker_pool_preserves_record_order(self):
        spec = small_spec()
        serial, _ = run_benchmark(spec)
        pooled, _ = run_benchmark(replace(spec, jobs=2))
        assert [comparable(r) for r in serial] == [comparable(r) for r in pooled]

    def test_progress_callback_counts_instances(self):
        seen = []
        run_benchmark(
            small_spec(algorithms=("cbs",)),
            progress=lambda done, total: seen.append((done, total)),
        )
        assert seen == [(1, 3), (2, 3), (3, 3)]

    def test_instances_share_tasks_across_algorithms(self):
        layout, _ = build_layout("rm2.1", "block")
        spec = small_spec(algorithms=("cbs", "ma-astar"))
        records = run_instance(layout, spec, 0)
        # same tasks means both replay to the same terminating timestep
        # whenever both optimize the same instance to the same makespan
        assert all(r.seed == spec.base_seed for r in records)


class TestExternalPolicy:
    STAY_SCRIPT = (
        "import sys, json\n"
        "for line in sys.stdin:\n"
        "    msg = json.loads(line)\n"
        "    if msg['cmd'] == 'reset':\n"
        "        print(json.dumps({'ok': True}), flush=True)\n"
        "    elif msg['cmd'] == 'act':\n"
        "        acts = {k: 0 for k in msg['obs']}\n"
        "        print(json.dumps({'actions': acts}), flush=True)\n"
        "    else:\n"
        "        break\n"
    )

    def test_stay_forever_policy_truncates(self):
        command = f"{shlex.quote(sys.executable)} -c {shlex.quote(self.STAY_SCRIPT)}"
        spec = small_spec(
            layout="rm1.1",
            variant="basic",
            algorithms=(f"external:{command}",),
            episodes=1,
            t_max=10,
            budget=SolverBudget(wall_ms=10_000.0, horizon=10),
        )
        records, _ = run_benchmark(spec)
        assert records[0].status == "truncated"
        assert records[0].timesteps is None

    def test_refused_reset_raises(self):
        command = (
            f"{shlex.quote(sys.executable)} -c "
            + shlex.quote("print('{\"ok\": false}')")
        )
        spec = small_spec(
            layout="rm1.1",
            variant="basic",
            algorithms=(f"external:{command}",),
            episodes=1,
        )
        with pytest.raises(RuntimeError, match="refused"):
            run_benchmark(spec)


class TestSummaries:
    def rec(self, i, algo, status, steps, wall=1.0):
        return RunRecord(
            instance=i, seed=42 + i, algorithm=algo, status=status,
            timesteps=steps, sum_of_costs=steps, wall_ms=wall,
            collisions=0, deadlock=False,
        )

    def test_box_stats_match_numpy(self):
        steps = [4, 7, 8, 9, 30]
        records = [
            self.rec(i, "cbs", "success", s) for i, s in enumerate(steps)
        ]
        summary = summarize(records)["cbs"]
        q1, median, q3 = np.percentile(steps, [25, 50, 75])
        assert summary.median_timesteps == median
        assert summary.q1_timesteps == q1
        assert summary.q3_timesteps == q3
        iqr = q3 - q1
        data = np.array(steps, dtype=float)
        assert summary.whisker_low == data[data >= q1 - 1.5 * iqr].min()
        assert summary.whisker_high == data[data <= q3 + 1.5 * iqr].max()
        # 30 sits outside the upper fence, so the whisker stops at 9
        assert summary.whisker_high == 9.0

    def test_failures_drop_out_of_box_stats(self):
        records = [
            self.rec(0, "cbs", "success", 10),
            self.rec(1, "cbs", "timeout", None),
        ]
        summary = summarize(records)["cbs"]
        assert summary.success_rate == 0.5
        assert summary.median_timesteps == 10.0

    def test_all_failures_leave_box_empty(self):
        summary = summarize([self.rec(0, "cbs", "timeout", None)])["cbs"]
        assert summary.successes == 0
        assert summary.median_timesteps is None
        assert summary.whisker_low is None


class TestExports:
    def test_csv_round_trip(self, tmp_path):
        records, _ = run_benchmark(small_spec())
        path = tmp_path / "results.csv"
        export_results(records, "csv", path)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
        assert load_results(path) == list(records)

    def test_json_round_trip(self, tmp_path):
        records, _ = run_benchmark(small_spec(algorithms=("cbs",)))
        path = tmp_path / "results.json"
        export_results(records, "json", path)
        assert load_results(path) == list(records)

    def test_empty_timesteps_become_none(self, tmp_path):
        records, _ = run_benchmark(small_spec(algorithms=("random",), episodes=1))
        path = tmp_path / "results.csv"
        export_results(records, "csv", path)
        row = path.read_text().splitlines()[1].split(",")
        assert row[4] == "" and row[5] == ""
        assert load_results(path)[0].timesteps is None

    def test_wrong_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="columns"):
            load_results(path)

    def test_unwritable_path_reports_the_path(self, tmp_path):
        with pytest.raises(OSError, match="no/such"):
            export_results([], "csv", tmp_path / "no" / "such" / "file.csv")

    def test_sweep_csv_columns(self, tmp_path):
        rows = scalability_sweep(
            small_spec(algorithms=("cbs",), episodes=2), (2, 3)
        )
        path = tmp_path / "sweep.csv"
        export_sweep(rows, path)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(SWEEP_COLUMNS)
        assert len(path.read_text().splitlines()) == 1 + len(rows)


class TestScalabilitySweep:
    def test_rows_in_spec_order(self):
        rows = scalability_sweep(
            small_spec(algorithms=("cbs", "random"), episodes=1), (2, 3)
        )
        assert [(r["n_agents"], r["algorithm"]) for r in rows] == [
            (2, "cbs"), (2, "random"), (3, "cbs"), (3, "random"),
        ]

    def test_counts_must_ascend(self):
        with pytest.raises(ValueError, match="ascending"):
            scalability_sweep(small_spec(), (4, 2))
        with pytest.raises(ValueError, match="ascending"):
            scalability_sweep(small_spec(), (2, 2))

    def test_counts_must_be_positive_and_present(self):
        with pytest.raises(ValueError, match="non-empty"):
            scalability_sweep(small_spec(), ())
        with pytest.raises(ValueError, match="positive"):
            scalability_sweep(small_spec(), (0, 2))


class TestHeatMap:
    def test_single_straight_path_counts_each_cell_once(self):
        layout, tasks = build_layout("rm1.1", "basic")
        solution = solve_cbs(layout, tasks, budget=SMALL_BUDGET)
        heatmap = accumulate_heatmap(layout, [solution])
        assert heatmap.episodes == 1
        assert heatmap.total == (solution.makespan + 1) * len(tasks)

    def test_conservation_over_mixed_episodes(self):
        layout, _ = build_layout("rm2.1", "block")
        episodes = []
        expected = 0
        for seed in (42, 43, 44):
            tasks = sample_tasks(layout, 2, np.random.default_rng(seed))
            solution = solve_cbs(layout, tasks, budget=SMALL_BUDGET)
            assert solution.status == "solved"
            episodes.append(solution)
            expected += (solution.makespan + 1) * 2
        heatmap = accumulate_heatmap(layout, episodes)
        assert heatmap.total == expected
        assert heatmap.episodes == 3

    def test_walls_stay_zero(self):
        layout, _ = build_layout("rm2.1", "block")
        tasks = sample_tasks(layout, 3, np.random.default_rng(7))
        solution = solve_cbs(layout, tasks, budget=SMALL_BUDGET)
        heatmap = accumulate_heatmap(layout, [solution])
        assert not heatmap.counts[layout.cells != 0].any()

    def test_failed_episodes_are_skipped(self):
        layout, tasks = build_layout("rm1.1", "basic")
        config = EpisodeConfig(
            layout=layout, n_agents=len(tasks), tasks=tasks, t_max=5
        )
        _, trace = run_episode(config, random_policy, seed=0)
        heatmap = accumulate_heatmap(layout, [trace])
        assert heatmap.episodes == 0
        assert heatmap.total == 0

    def test_successful_trace_counts_all_positions(self):
        layout, tasks = build_layout("rm1.1", "basic")
        solution = solve_cbs(layout, tasks, budget=SMALL_BUDGET)
        _, trace, _ = replay_solution(layout, tasks, solution)
        heatmap = accumulate_heatmap(layout, [trace])
        assert heatmap.episodes == 1
        assert heatmap.total == (len(trace.steps) + 1) * len(tasks)

    def test_foreign_trace_rejected(self):
        layout, tasks = build_layout("rm1.1", "basic")
        other, _ = build_layout("rm2.1", "block")
        solution = solve_cbs(layout, tasks, budget=SMALL_BUDGET)
        _, trace, _ = replay_solution(layout, tasks, solution)
        with pytest.raises(ValueError, match="mixed into"):
            accumulate_heatmap(other, [trace])

    def test_unknown_episode_type_rejected(self):
        layout, _ = build_layout("rm1.1", "basic")
        with pytest.raises(TypeError, match="aggregate"):
            accumulate_heatmap(layout, [{"not": "an episode"}])


class TestRenderHeatMap:
    def flat_map(self):
        counts = np.array([[0, 1, 2], [3, 0, 5], [6, 7, 0]], dtype=np.int64)
        return HeatMap(counts=counts, episodes=1)

    def test_csv_has_one_row_per_grid_row(self, tmp_path):
        path = tmp_path / "heat.csv"
        render_heatmap(self.flat_map(), "csv", path)
        rows = [line.split(",") for line in path.read_text().splitlines()]
        assert rows == [["0", "1", "2"], ["3", "0", "5"], ["6", "7", "0"]]

    def test_pgm_is_plain_p2(self, tmp_path):
        path = tmp_path / "heat.pgm"
        render_heatmap(self.flat_map(), "pgm", path)
        tokens = path.read_text().split()
        assert tokens[0] == "P2"
        assert tokens[1:4] == ["3", "3", "7"]  # width height maxval
        assert tokens[4:] == "0 1 2 3 0 5 6 7 0".split()

    def test_pgm_maxval_floor_is_one(self, tmp_path):
        empty = HeatMap(counts=np.zeros((2, 2), dtype=np.int64), episodes=0)
        path = tmp_path / "zero.pgm"
        render_heatmap(empty, "pgm", path)
        assert path.read_text().split()[3] == "1"

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="format"):
            render_heatmap(self.flat_map(), "png", tmp_path / "x.png")
