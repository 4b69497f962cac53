"""CLI tests: every subcommand end to end through main()."""

import json
import subprocess
import sys

import pytest

from gridlock.bench import CSV_COLUMNS, load_results
from gridlock.cli import main
from gridlock.solvers import Solution

SAFE_STATE = {
    "available": [3, 3, 2],
    "max": [[7, 5, 3], [3, 2, 2], [9, 0, 2], [2, 2, 2], [4, 3, 3]],
    "allocation": [[0, 1, 0], [2, 0, 0], [3, 0, 2], [2, 1, 1], [0, 0, 2]],
}
UNSAFE_STATE = {
    "available": [0, 0],
    "max": [[1, 1], [1, 1]],
    "allocation": [[1, 0], [0, 1]],
}


class TestSolve:
    def test_writes_solution_file(self, tmp_path, capsys):
        out = tmp_path / "plan.json"
        code = main([
            "solve", "--layout", "rm1.1", "--agents", "2",
            "--algo", "cbs", "--out", str(out),
        ])
        assert code == 0
        solution = Solution.from_json(out.read_text())
        assert solution.status == "solved"
        assert solution.makespan == 9
        assert "solved makespan=9" in capsys.readouterr().out

    def test_ma_astar_strict_collision(self, tmp_path):
        out = tmp_path / "plan.json"
        code = main([
            "solve", "--layout", "rm1.1", "--agents", "2",
            "--algo", "ma-astar", "--collision", "strict",
            "--out", str(out),
        ])
        assert code == 0
        assert Solution.from_json(out.read_text()).status == "solved"

    def test_sampled_tasks_follow_seed(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        argv = ["solve", "--layout", "rm2.1", "--variant", "block",
                "--agents", "2", "--algo", "cbs", "--seed", "99"]
        assert main(argv + ["--out", str(a)]) == 0
        assert main(argv + ["--out", str(b)]) == 0
        first = Solution.from_json(a.read_text())
        second = Solution.from_json(b.read_text())
        assert first.paths == second.paths

    def test_unknown_layout_fails_cleanly(self, tmp_path, capsys):
        code = main([
            "solve", "--layout", "rm9.9", "--agents", "2",
            "--algo", "cbs", "--out", str(tmp_path / "x.json"),
        ])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_algo_is_a_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            main([
                "solve", "--layout", "rm1.1", "--agents", "2",
                "--algo", "dijkstra", "--out", str(tmp_path / "x.json"),
            ])
        assert info.value.code == 2


class TestBench:
    def test_csv_and_heatmap(self, tmp_path, capsys):
        out = tmp_path / "results.csv"
        heat = tmp_path / "heat.pgm"
        code = main([
            "bench", "--layout", "rm2.1", "--variant", "block",
            "--agents", "2", "--episodes", "2", "--algos", "cbs,random",
            "--budget-ms", "5000", "--out", str(out),
            "--heatmap", str(heat),
        ])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + 2 * 2
        assert heat.read_text().startswith("P2\n")
        stdout = capsys.readouterr().out
        assert "cbs: success 2/2" in stdout
        assert "4 records" in stdout

    def test_json_output_by_suffix(self, tmp_path):
        out = tmp_path / "results.json"
        code = main([
            "bench", "--layout", "rm1.1", "--agents", "2",
            "--episodes", "1", "--algos", "cbs",
            "--budget-ms", "5000", "--out", str(out),
        ])
        assert code == 0
        assert len(json.loads(out.read_text())) == 1
        assert len(load_results(out)) == 1

    def test_heatmap_csv_suffix(self, tmp_path):
        heat = tmp_path / "heat.csv"
        code = main([
            "bench", "--layout", "rm1.1", "--agents", "2",
            "--episodes", "1", "--algos", "cbs",
            "--budget-ms", "5000", "--out", str(tmp_path / "r.csv"),
            "--heatmap", str(heat),
        ])
        assert code == 0
        assert len(heat.read_text().splitlines()) == 3  # rm1.1 is 3 rows tall

    def test_empty_algos_fails(self, tmp_path, capsys):
        code = main([
            "bench", "--layout", "rm1.1", "--agents", "2",
            "--episodes", "1", "--algos", " , ",
            "--out", str(tmp_path / "r.csv"),
        ])
        assert code == 1
        assert "at least one" in capsys.readouterr().err


class TestSweep:
    def test_range_produces_rows(self, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        code = main([
            "sweep", "--layout", "rm2.1", "--variant", "block",
            "--agents", "2..3", "--episodes", "1", "--algos", "cbs",
            "--budget-ms", "5000", "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 3
        assert lines[1].startswith("2,cbs,")
        assert lines[2].startswith("3,cbs,")

    def test_single_count_range(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main([
            "sweep", "--layout", "rm1.1", "--agents", "2",
            "--episodes", "1", "--algos", "cbs",
            "--budget-ms", "5000", "--out", str(out),
        ])
        assert code == 0
        assert len(out.read_text().splitlines()) == 2

    @pytest.mark.parametrize("bad", ["4..2", "0..3", "x..y", ".."])
    def test_bad_ranges_fail(self, bad, tmp_path, capsys):
        code = main([
            "sweep", "--layout", "rm1.1", "--agents", bad,
            "--episodes", "1", "--algos", "cbs",
            "--out", str(tmp_path / "s.csv"),
        ])
        assert code == 1
        assert "agent range" in capsys.readouterr().err

    def test_capacity_overrun_fails(self, tmp_path, capsys):
        # rm1.1 has 17 free cells; 9 agents need 18
        code = main([
            "sweep", "--layout", "rm1.1", "--agents", "9",
            "--episodes", "1", "--algos", "cbs",
            "--out", str(tmp_path / "s.csv"),
        ])
        assert code == 1
        assert "free cells" in capsys.readouterr().err


class TestDeadlockCheck:
    def test_safe_state_prints_order(self, tmp_path, capsys):
        path = tmp_path / "state.json"
        path.write_text(json.dumps(SAFE_STATE))
        assert main(["deadlock", "check", "--file", str(path)]) == 0
        out = capsys.readouterr().out.strip()
        assert out.startswith("safe ")
        assert len(out.split()) == 1 + 5

    def test_unsafe_state(self, tmp_path, capsys):
        path = tmp_path / "state.json"
        path.write_text(json.dumps(UNSAFE_STATE))
        assert main(["deadlock", "check", "--file", str(path)]) == 0
        assert capsys.readouterr().out.strip() == "unsafe"

    def test_missing_file_fails(self, tmp_path, capsys):
        code = main(["deadlock", "check", "--file", str(tmp_path / "no.json")])
        assert code == 1
        assert "cannot read" in capsys.readouterr().err

    def test_invalid_json_fails(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{nope")
        assert main(["deadlock", "check", "--file", str(path)]) == 1
        assert "not valid JSON" in capsys.readouterr().err

    def test_malformed_state_fails(self, tmp_path, capsys):
        path = tmp_path / "short.json"
        path.write_text(json.dumps({"available": [1]}))
        assert main(["deadlock", "check", "--file", str(path)]) == 1
        assert "bad banker state" in capsys.readouterr().err


class TestOracle:
    def test_reports_known_optimum(self, capsys):
        assert main(["oracle", "--layout", "rm1.1", "--agents", "2"]) == 0
        out = capsys.readouterr().out
        assert "solvable makespan=9 sum_of_costs=16" in out

    def test_refuses_oversize_instances(self, capsys):
        code = main([
            "oracle", "--layout", "rm2.1", "--variant", "block",
            "--agents", "4",
        ])
        assert code == 1
        assert "exceeds cap" in capsys.readouterr().err


class TestServe:
    def test_stdio_round_trip(self):
        lines = "\n".join([
            json.dumps({"cmd": "info"}),
            json.dumps({"cmd": "reset", "layout": "rm1.1", "seed": 42}),
            json.dumps({"cmd": "step", "actions": {"1": 0, "2": 0}}),
            json.dumps({"cmd": "close"}),
        ])
        proc = subprocess.run(
            [sys.executable, "-m", "gridlock.cli", "serve", "--stdio"],
            input=lines + "\n",
            capture_output=True,
            text=True,
            timeout=60,
        )
        assert proc.returncode == 0
        replies = [json.loads(line) for line in proc.stdout.splitlines()]
        assert len(replies) == 4
        assert all(reply["ok"] for reply in replies)
        assert replies[0]["protocol_version"] == 1
        assert replies[1]["t"] == 0
        assert replies[2]["t"] == 1

    def test_endpoint_is_required(self):
        with pytest.raises(SystemExit) as info:
            main(["serve"])
        assert info.value.code == 2


class TestSeedEnvironment:
    def test_mapf_seed_matches_explicit_seed(self, tmp_path):
        argv = ["solve", "--layout", "rm2.1", "--variant", "block",
                "--agents", "2", "--algo", "cbs"]
        explicit = tmp_path / "explicit.json"
        assert main(argv + ["--seed", "123", "--out", str(explicit)]) == 0
        via_env = tmp_path / "env.json"
        proc = subprocess.run(
            [sys.executable, "-m", "gridlock.cli"]
            + argv + ["--out", str(via_env)],
            env={"PATH": "/usr/bin:/bin", "MAPF_SEED": "123"},
            capture_output=True,
            text=True,
            timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        a = Solution.from_json(explicit.read_text())
        b = Solution.from_json(via_env.read_text())
        assert a.paths == b.paths
