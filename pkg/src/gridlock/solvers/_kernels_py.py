"""Pure-Python search kernels.

These are the reference semantics for the compiled twins in _kernels.pyx:
both must produce identical outputs, including iteration order and
expansion counts. Grids arrive as row-major uint8 bytes (0 free, 1 wall),
positions as flat cell indices. Constraint sets hold packed integers:
vertex = cell << 20 | t, edge = frm << 40 | to << 20 | t.
"""

from heapq import heappop, heappush

IMPL = "python"


def _candidates(cells, width, pos):
    """Target cells reachable in one step, in action order (stay first)."""
    size = len(cells)
    col = pos % width
    out = [pos]
    if pos >= width and cells[pos - width] == 0:
        out.append(pos - width)
    if col + 1 < width and cells[pos + 1] == 0:
        out.append(pos + 1)
    if pos + width < size and cells[pos + width] == 0:
        out.append(pos + width)
    if col > 0 and cells[pos - 1] == 0:
        out.append(pos - 1)
    return out


def joint_neighbors(cells, width, positions, forbid_following=False):
    """All conflict-free joint moves, lexicographic in agent-major order.

    Same-target proposals and swaps are filtered; with forbid_following,
    entering any currently occupied cell is filtered too.
    """
    n = len(positions)
    occupied = frozenset(positions)
    candidates = [_candidates(cells, width, p) for p in positions]
    chosen = [0] * n
    out = []

    def extend(i):
        if i == n:
            out.append(tuple(chosen))
            return
        current = positions[i]
        for target in candidates[i]:
            if forbid_following and target != current and target in occupied:
                continue
            ok = True
            for j in range(i):
                if chosen[j] == target:
                    ok = False
                    break
                if target == positions[j] and chosen[j] == current:
                    ok = False
                    break
            if ok:
                chosen[i] = target
                extend(i + 1)

    extend(0)
    return out


def spacetime_astar(
    cells, width, start, goal, horizon, vertex_block, edge_block, goal_floor
):
    """Single-agent A* over (cell, time) with unit step costs.

    Waits count like moves; ties break on (f, h, insertion order). The
    goal test additionally requires time >= goal_floor so constraints on
    the goal cell later than the first arrival stay respected. Returns
    (path as flat cells, expansions); path None when unreachable.
    """
    goal_r, goal_c = divmod(goal, width)
    start_r, start_c = divmod(start, width)
    h0 = abs(start_r - goal_r) + abs(start_c - goal_c)
    if h0 > horizon:
        return None, 0
    if (start << 20) in vertex_block:
        return None, 0
    heap = [(h0, h0, 0, start, 0)]
    seen = {(start, 0)}
    parent = {}
    seq = 1
    expansions = 0
    while heap:
        f, h, _, cell, t = heappop(heap)
        expansions += 1
        if cell == goal and t >= goal_floor:
            path = [cell]
            while t > 0:
                cell = parent[(cell, t)]
                t -= 1
                path.append(cell)
            path.reverse()
            return path, expansions
        if t == horizon:
            continue
        nt = t + 1
        for target in _candidates(cells, width, cell):
            key = (target, nt)
            if key in seen:
                continue
            if (target << 20 | nt) in vertex_block:
                continue
            if (cell << 40 | target << 20 | nt) in edge_block:
                continue
            tr, tc = divmod(target, width)
            nh = abs(tr - goal_r) + abs(tc - goal_c)
            if nt + nh > horizon:
                continue
            seen.add(key)
            parent[key] = cell
            heappush(heap, (nt + nh, nh, seq, target, nt))
            seq += 1
    return None, expansions
