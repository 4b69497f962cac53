"""Classical multi-agent pathfinding solvers and the exhaustive test oracle.

Two planners share one contract: solve_ma_astar searches the joint
position space for a makespan-optimal plan, solve_cbs branches on
conflicts for a sum-of-costs-optimal one. Both respect SolverBudget
and return a Solution. solve() dispatches by name.
"""

from .base import (
    STATUSES,
    Constraint,
    Solution,
    SolverBudget,
    edge_constraint,
    vertex_constraint,
)
from .cbs import first_conflict, solve_cbs
from .kernels import IMPL as KERNEL_IMPL
from .low_level import low_level_astar
from .ma_astar import HEURISTICS, solve_ma_astar
from .oracle import (
    OracleCapacityError,
    OracleResult,
    iddfs_optimal_makespan,
    joint_bfs_oracle,
)

SOLVERS = {
    "ma-astar": solve_ma_astar,
    "cbs": solve_cbs,
}


def solve(algorithm, grid, tasks, budget=None, **options):
    """Run a registered solver by name; see SOLVERS for the choices."""
    try:
        solver = SOLVERS[algorithm]
    except KeyError:
        raise ValueError(
            f"unknown algorithm {algorithm!r}, expected one of {sorted(SOLVERS)}"
        ) from None
    return solver(grid, tasks, budget=budget, **options)


__all__ = [
    "STATUSES",
    "Constraint",
    "Solution",
    "SolverBudget",
    "edge_constraint",
    "vertex_constraint",
    "first_conflict",
    "solve_cbs",
    "KERNEL_IMPL",
    "low_level_astar",
    "HEURISTICS",
    "solve_ma_astar",
    "OracleCapacityError",
    "OracleResult",
    "iddfs_optimal_makespan",
    "joint_bfs_oracle",
    "SOLVERS",
    "solve",
]
