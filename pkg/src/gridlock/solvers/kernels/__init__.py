"""Search-kernel selection.

Imports the compiled kernels when the extension is available and falls
back to the pure-Python twins otherwise. Set GRIDLOCK_PURE_KERNELS=1 to
force the fallback (useful for debugging and for benchmarking the two
implementations against each other).
"""

import os

if os.environ.get("GRIDLOCK_PURE_KERNELS"):
    from gridlock.solvers import _kernels_py as _impl
else:
    try:
        from gridlock.solvers import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from gridlock.solvers import _kernels_py as _impl

IMPL = _impl.IMPL
joint_neighbors = _impl.joint_neighbors
spacetime_astar = _impl.spacetime_astar

__all__ = ["IMPL", "joint_neighbors", "spacetime_astar"]
