import json
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridlock.grid import GridLayout, grid_from_text
from gridlock.layouts import (
    CapacityError,
    LayoutError,
    Task,
    TaskSamplingError,
    build_layout,
    connected_components,
    layout_families,
    layout_variants,
    load_layout,
    resolve_layout,
    sample_tasks,
    save_layout,
    validate_layout,
)
from gridlock.solvers import joint_bfs_oracle
from gridlock.solvers.oracle import iddfs_optimal_makespan

ALL_VARIANTS = [
    (family, variant)
    for family in layout_families()
    for variant in layout_variants(family)
]


class TestGenerators:
    @pytest.mark.parametrize("family,variant", ALL_VARIANTS)
    def test_deterministic_and_connected(self, family, variant):
        first, tasks_a = build_layout(family, variant)
        second, tasks_b = build_layout(family, variant)
        assert np.array_equal(first.cells, second.cells)
        assert tasks_a == tasks_b
        components = set(connected_components(first).values())
        assert len(components) == 1

    @pytest.mark.parametrize("family,variant", ALL_VARIANTS)
    def test_default_tasks_valid(self, family, variant):
        layout, tasks = build_layout(family, variant)
        assert validate_layout(layout, tasks) == []
        if family.startswith("rm1"):
            assert tasks is not None
        else:
            assert tasks is None

    def test_family_name_normalization(self):
        for alias in ("rm2.1", "rm2_1", "RM2.1"):
            layout, _ = build_layout(alias)
            assert layout.family == "rm2.1"

    def test_unknown_family_rejected(self):
        with pytest.raises(LayoutError):
            build_layout("rm9.9")

    def test_unknown_variant_rejected(self):
        with pytest.raises(LayoutError):
            build_layout("rm1.1", "spiral")

    def test_corridor_length_too_small_rejected(self):
        with pytest.raises(LayoutError):
            build_layout("rm1.2", corridor_length=1)

    def test_unknown_param_rejected(self):
        with pytest.raises(LayoutError):
            build_layout("rm1.1", pocket_count=2)

    def test_passage_row_out_of_range_rejected(self):
        with pytest.raises(LayoutError):
            build_layout("rm1.3", passage_row=9)

    def test_size_defaults(self):
        for family, variant in ALL_VARIANTS:
            layout, _ = build_layout(family, variant)
            if family.startswith("rm1"):
                assert layout.height <= 7 and layout.width <= 9
            else:
                assert layout.height <= 10 and layout.width <= 14

    def test_dead_ends_keeps_every_aisle_reachable(self):
        block, _ = build_layout("rm2.1", "block")
        dead, _ = build_layout("rm2.1", "dead-ends")
        # Same outer shell: the left road and every cross aisle survive.
        assert len(set(connected_components(dead).values())) == 1
        free_dead = set(dead.free_cells())
        assert free_dead < set(block.free_cells())
        # The cross aisles now stop at the right edge: the cell right of each
        # aisle end is the grid boundary, not a vertical road.
        for x in (0, 3, 6, 9):
            assert (x, dead.width - 1) in free_dead

    def test_fishbone_has_staircase_diagonals(self):
        layout, _ = build_layout("rm2.2")
        cells = layout.cells
        # The rasterized diagonal punches through otherwise-walled columns.
        for x, y in ((8, 6), (7, 6), (6, 4), (5, 4), (4, 2), (3, 2)):
            assert cells[x, y] == 0
        for x, y in ((8, 8), (7, 8), (6, 10), (5, 10), (4, 12), (3, 12)):
            assert cells[x, y] == 0

    def test_production_floor_roads(self):
        layout, _ = build_layout("rm3.1")
        cells = layout.cells
        assert (cells[1, 1:13] == 0).all() and (cells[2, 1:13] == 0).all()
        assert (cells[8, 1:13] == 0).all()
        # Dead-end goal aisles: deepest cells have exactly one free neighbor.
        for cell in ((6, 3), (4, 5), (4, 10)):
            x, y = cell
            free_neighbors = sum(
                layout.is_free((x + dx, y + dy))
                for dx, dy in ((-1, 0), (0, 1), (1, 0), (0, -1))
            )
            assert cells[x, y] == 0 and free_neighbors == 1

    def test_short_goal_aisles_are_stubs(self):
        layout, _ = build_layout("rm3.1", "short-goal-aisles")
        for cell in ((3, 3), (3, 9), (7, 5), (7, 10)):
            x, y = cell
            assert layout.cells[x, y] == 0
            free_neighbors = sum(
                layout.is_free((x + dx, y + dy))
                for dx, dy in ((-1, 0), (0, 1), (1, 0), (0, -1))
            )
            assert free_neighbors == 1


class TestCalibration:
    """Optimal values for the fixed default tasks, frozen from the oracle."""

    def test_rm1_1_basic_optimum_is_nine(self):
        layout, tasks = build_layout("rm1.1", "basic")
        result = joint_bfs_oracle(layout.cells, tasks)
        assert result.status == "solvable"
        assert result.optimal_makespan == 9
        assert result.optimal_sum_of_costs == 16
        assert iddfs_optimal_makespan(layout.cells, tasks) == 9

    @pytest.mark.parametrize(
        "family,variant,expected_makespan,expected_soc",
        [
            ("rm1.1", "unfavorable", 6, 10),
            ("rm1.1", "alt-aisle", 9, 16),
            ("rm1.2", "basic", 13, 20),
            ("rm1.2", "three-agents", 15, 34),
            ("rm1.2", "long-corridor", 15, 23),
            ("rm1.3", "basic", 11, 19),
            ("rm1.3", "three-agents", 14, 35),
            ("rm1.3", "shifted-passage", 15, 27),
        ],
    )
    def test_small_family_optima(
        self, family, variant, expected_makespan, expected_soc
    ):
        layout, tasks = build_layout(family, variant)
        result = joint_bfs_oracle(layout.cells, tasks, cap=20_000_000)
        assert result.status == "solvable"
        assert result.optimal_makespan == expected_makespan
        assert result.optimal_sum_of_costs == expected_soc

    @pytest.mark.slow
    @pytest.mark.parametrize(
        "variant,expected_makespan,expected_soc",
        [("basic", 11, 36), ("varied", 11, 36), ("long-paths", 12, 38)],
    )
    def test_intersection_optima(self, variant, expected_makespan, expected_soc):
        layout, tasks = build_layout("rm1.4", variant)
        result = joint_bfs_oracle(layout.cells, tasks, cap=20_000_000)
        assert result.status == "solvable"
        assert result.optimal_makespan == expected_makespan
        assert result.optimal_sum_of_costs == expected_soc


class TestSampleTasks:
    @given(st.integers(min_value=0, max_value=1_000))
    @settings(max_examples=60, deadline=None)
    def test_sampled_tasks_always_valid(self, seed):
        layout, _ = build_layout("rm2.1", "block")
        tasks = sample_tasks(layout, 4, np.random.default_rng(seed))
        assert validate_layout(layout, tasks) == []

    def test_deterministic_per_seed(self):
        layout, _ = build_layout("rm3.1")
        a = sample_tasks(layout, 4, np.random.default_rng(42))
        b = sample_tasks(layout, 4, np.random.default_rng(42))
        c = sample_tasks(layout, 4, np.random.default_rng(43))
        assert a == b
        assert a != c

    def test_capacity_error(self):
        layout = GridLayout("tiny", grid_from_text("..\n.."))
        with pytest.raises(CapacityError):
            sample_tasks(layout, 3, np.random.default_rng(0))

    def test_goals_may_reuse_other_starts(self):
        # Not a strict requirement, but the sampler must not exclude goals
        # that coincide with another agent's start; over many seeds on a tiny
        # grid this occurs.
        layout = GridLayout("band", grid_from_text("....."))
        seen_overlap = False
        for seed in range(200):
            tasks = sample_tasks(layout, 2, np.random.default_rng(seed))
            starts = {t.start for t in tasks}
            if any(t.goal in starts for t in tasks):
                seen_overlap = True
                break
        assert seen_overlap

    def test_disconnected_layout_respects_reachability(self):
        layout = GridLayout("split", grid_from_text("..#..\n..#.."))
        for seed in range(50):
            tasks = sample_tasks(layout, 2, np.random.default_rng(seed))
            comps = connected_components(layout)
            for task in tasks:
                assert comps[task.start] == comps[task.goal]


class TestValidateLayout:
    def test_reports_everything(self):
        layout = GridLayout("split", grid_from_text("..#.."))
        tasks = (
            Task((0, 0), (0, 4)),  # unreachable
            Task((0, 1), (0, 1)),  # start == goal
            Task((0, 2), (0, 3)),  # start on a wall
        )
        violations = validate_layout(layout, tasks)
        assert any("unreachable" in v for v in violations)
        assert any("starts on its own goal" in v for v in violations)
        assert any("not a free cell" in v for v in violations)

    def test_duplicate_starts_reported(self):
        layout = GridLayout("open", grid_from_text("....\n...."))
        tasks = (Task((0, 0), (0, 1)), Task((0, 0), (0, 2)))
        violations = validate_layout(layout, tasks)
        assert any("starts are not pairwise distinct" in v for v in violations)


class TestLayoutFiles:
    def test_round_trip(self, tmp_path):
        layout, tasks = build_layout("rm1.1")
        path = tmp_path / "pocket.txt"
        save_layout(layout, tasks, path)
        loaded, loaded_tasks = load_layout(path)
        assert np.array_equal(loaded.cells, layout.cells)
        assert loaded.family == "rm1.1"
        assert loaded_tasks == tasks

    def test_bare_grid_without_sidecar(self, tmp_path):
        path = tmp_path / "bare.txt"
        path.write_text("..\n..\n")
        layout, tasks = load_layout(path)
        assert layout.name == "bare"
        assert tasks is None

    def test_missing_file_rejected(self):
        with pytest.raises(LayoutError):
            load_layout("/nonexistent/nowhere.txt")

    def test_invalid_sidecar_tasks_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("..\n..\n")
        (tmp_path / "bad.json").write_text(
            json.dumps(
                {
                    "name": "bad",
                    "default_tasks": [
                        {"start": [0, 0], "goal": [0, 0]},
                        {"start": [1, 1], "goal": [0, 1]},
                    ],
                }
            )
        )
        with pytest.raises(LayoutError):
            load_layout(path)

    def test_shipped_files_match_generators(self):
        data = resources.files("gridlock.layouts") / "data"
        count = 0
        for family in layout_families():
            for variant in layout_variants(family):
                stem = f"{family.replace('.', '_')}.{variant}"
                layout, tasks = build_layout(family, variant)
                text = (data / f"{stem}.txt").read_text()
                assert grid_from_text(text).tolist() == layout.cells.tolist()
                meta = json.loads((data / f"{stem}.json").read_text())
                assert meta["family"] == family
                assert meta["variant"] == variant
                if tasks is None:
                    assert meta["default_tasks"] is None
                else:
                    assert meta["default_tasks"] == [
                        {"start": list(t.start), "goal": list(t.goal)}
                        for t in tasks
                    ]
                count += 1
        assert count == len(ALL_VARIANTS)


class TestResolveLayout:
    def test_family_reference(self):
        layout, tasks = resolve_layout("rm1.1", "basic")
        assert layout.family == "rm1.1"
        assert tasks is not None

    def test_file_reference(self, tmp_path):
        layout, tasks = build_layout("rm2.1")
        path = tmp_path / "depot.txt"
        save_layout(layout, tasks, path)
        loaded, _ = resolve_layout(str(path))
        assert np.array_equal(loaded.cells, layout.cells)

    def test_family_typo_rejected(self):
        with pytest.raises(LayoutError):
            resolve_layout("rm2.7")

    def test_variant_with_file_rejected(self, tmp_path):
        path = tmp_path / "grid.txt"
        path.write_text("..\n..\n")
        with pytest.raises(LayoutError):
            resolve_layout(str(path), "block")
