"""Deadlock-capable multi-agent pathfinding benchmarks on 4-connected grids."""

__version__ = "0.1.0"
