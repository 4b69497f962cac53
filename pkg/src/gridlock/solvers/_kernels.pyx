# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled search kernels.

Twin of _kernels_py: identical inputs must give identical outputs,
including iteration order and expansion counts. Packed-integer layouts
(vertex = cell << 20 | t, edge = frm << 40 | to << 20 | t) match the
pure-Python module.
"""

from libc.stdlib cimport free, malloc, qsort, realloc

IMPL = "cython"


# --- joint successor enumeration ---------------------------------------------


cdef void _extend(
    int i,
    int n,
    int *pos,
    int *cand,
    int *ncand,
    int *chosen,
    bint forbid_following,
    list out,
):
    cdef int k, j, target, current
    cdef bint ok
    if i == n:
        out.append(tuple([chosen[j] for j in range(n)]))
        return
    current = pos[i]
    for k in range(ncand[i]):
        target = cand[i * 5 + k]
        if forbid_following and target != current:
            ok = True
            for j in range(n):
                if pos[j] == target:
                    ok = False
                    break
            if not ok:
                continue
        ok = True
        for j in range(i):
            if chosen[j] == target or (
                target == pos[j] and chosen[j] == current
            ):
                ok = False
                break
        if ok:
            chosen[i] = target
            _extend(i + 1, n, pos, cand, ncand, chosen, forbid_following, out)


def joint_neighbors(
    const unsigned char[:] cells,
    int width,
    tuple positions,
    bint forbid_following=False,
):
    """All conflict-free joint moves, lexicographic in agent-major order."""
    cdef int n = len(positions)
    cdef int size = <int> cells.shape[0]
    cdef int i, p, col, k
    cdef int *pos = <int *> malloc(n * sizeof(int))
    cdef int *cand = <int *> malloc(n * 5 * sizeof(int))
    cdef int *ncand = <int *> malloc(n * sizeof(int))
    cdef int *chosen = <int *> malloc(n * sizeof(int))
    cdef list out = []
    if pos == NULL or cand == NULL or ncand == NULL or chosen == NULL:
        free(pos); free(cand); free(ncand); free(chosen)
        raise MemoryError()
    try:
        for i in range(n):
            pos[i] = positions[i]
        for i in range(n):
            p = pos[i]
            col = p % width
            k = 0
            cand[i * 5 + k] = p; k += 1
            if p >= width and cells[p - width] == 0:
                cand[i * 5 + k] = p - width; k += 1
            if col + 1 < width and cells[p + 1] == 0:
                cand[i * 5 + k] = p + 1; k += 1
            if p + width < size and cells[p + width] == 0:
                cand[i * 5 + k] = p + width; k += 1
            if col > 0 and cells[p - 1] == 0:
                cand[i * 5 + k] = p - 1; k += 1
            ncand[i] = k
        _extend(0, n, pos, cand, ncand, chosen, forbid_following, out)
    finally:
        free(pos); free(cand); free(ncand); free(chosen)
    return out


# --- constrained space-time A* -------------------------------------------------


cdef int _cmp_ll(const void *a, const void *b) noexcept nogil:
    cdef long long x = (<const long long *> a)[0]
    cdef long long y = (<const long long *> b)[0]
    return (x > y) - (x < y)


cdef long long *_sorted_keys(object block, Py_ssize_t *count) except? NULL:
    cdef Py_ssize_t n = len(block)
    count[0] = n
    if n == 0:
        return NULL
    cdef long long *keys = <long long *> malloc(n * sizeof(long long))
    if keys == NULL:
        raise MemoryError()
    cdef Py_ssize_t i = 0
    for item in block:
        keys[i] = item
        i += 1
    qsort(keys, n, sizeof(long long), _cmp_ll)
    return keys


cdef inline bint _contains(long long *keys, Py_ssize_t n, long long key) nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if keys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo < n and keys[lo] == key


cdef struct Heap:
    long long *keys
    long long *vals
    Py_ssize_t size
    Py_ssize_t cap


cdef inline int _heap_push(Heap *h, long long key, long long val) except -1:
    cdef Py_ssize_t i, up
    cdef long long *nk
    cdef long long *nv
    if h.size == h.cap:
        h.cap = h.cap * 2
        nk = <long long *> realloc(h.keys, h.cap * sizeof(long long))
        nv = <long long *> realloc(h.vals, h.cap * sizeof(long long))
        if nk == NULL or nv == NULL:
            if nk != NULL:
                h.keys = nk
            if nv != NULL:
                h.vals = nv
            raise MemoryError()
        h.keys = nk
        h.vals = nv
    i = h.size
    h.size += 1
    while i > 0:
        up = (i - 1) >> 1
        if h.keys[up] <= key:
            break
        h.keys[i] = h.keys[up]
        h.vals[i] = h.vals[up]
        i = up
    h.keys[i] = key
    h.vals[i] = val
    return 0


cdef inline void _heap_pop(Heap *h, long long *key, long long *val) nogil:
    key[0] = h.keys[0]
    val[0] = h.vals[0]
    h.size -= 1
    cdef long long lk = h.keys[h.size]
    cdef long long lv = h.vals[h.size]
    cdef Py_ssize_t i = 0, child
    while True:
        child = 2 * i + 1
        if child >= h.size:
            break
        if child + 1 < h.size and h.keys[child + 1] < h.keys[child]:
            child += 1
        if h.keys[child] >= lk:
            break
        h.keys[i] = h.keys[child]
        h.vals[i] = h.vals[child]
        i = child
    h.keys[i] = lk
    h.vals[i] = lv


def spacetime_astar(
    const unsigned char[:] cells,
    int width,
    int start,
    int goal,
    int horizon,
    object vertex_block,
    object edge_block,
    int goal_floor,
):
    """Single-agent A* over (cell, time); see the pure twin for semantics."""
    cdef int size = <int> cells.shape[0]
    cdef int goal_r = goal // width, goal_c = goal % width
    cdef int h0 = abs(start // width - goal_r) + abs(start % width - goal_c)
    if h0 > horizon:
        return None, 0
    cdef Py_ssize_t nv = 0, ne = 0
    cdef long long *vkeys = NULL
    cdef long long *ekeys = NULL
    cdef Heap heap
    heap.keys = NULL
    heap.vals = NULL
    cdef char *seen = NULL
    cdef int *parent = NULL
    cdef Py_ssize_t states = (<Py_ssize_t> size) * (horizon + 1)
    cdef long long key, val, seq = 1
    cdef long long expansions = 0
    cdef int cell, t, nt, k, target, col, nh, ncols
    cdef int cand[5]
    cdef list path
    try:
        vkeys = _sorted_keys(vertex_block, &nv)
        ekeys = _sorted_keys(edge_block, &ne)
        if _contains(vkeys, nv, (<long long> start) << 20):
            return None, 0
        heap.cap = 256
        heap.size = 0
        heap.keys = <long long *> malloc(heap.cap * sizeof(long long))
        heap.vals = <long long *> malloc(heap.cap * sizeof(long long))
        seen = <char *> malloc(states)
        parent = <int *> malloc(states * sizeof(int))
        if (heap.keys == NULL or heap.vals == NULL or seen == NULL
                or parent == NULL):
            raise MemoryError()
        for k in range(<int> states):
            seen[k] = 0
        _heap_push(
            &heap,
            (<long long> h0) << 45 | (<long long> h0) << 25,
            (<long long> start) << 20,
        )
        seen[start * (horizon + 1)] = 1
        while heap.size > 0:
            _heap_pop(&heap, &key, &val)
            expansions += 1
            cell = <int> (val >> 20)
            t = <int> (val & 0xFFFFF)
            if cell == goal and t >= goal_floor:
                path = [cell]
                while t > 0:
                    cell = parent[cell * (horizon + 1) + t]
                    t -= 1
                    path.append(cell)
                path.reverse()
                return path, int(expansions)
            if t == horizon:
                continue
            nt = t + 1
            col = cell % width
            k = 0
            cand[k] = cell; k += 1
            if cell >= width and cells[cell - width] == 0:
                cand[k] = cell - width; k += 1
            if col + 1 < width and cells[cell + 1] == 0:
                cand[k] = cell + 1; k += 1
            if cell + width < size and cells[cell + width] == 0:
                cand[k] = cell + width; k += 1
            if col > 0 and cells[cell - 1] == 0:
                cand[k] = cell - 1; k += 1
            ncols = k
            for k in range(ncols):
                target = cand[k]
                if seen[target * (horizon + 1) + nt]:
                    continue
                if _contains(
                    vkeys, nv, (<long long> target) << 20 | nt
                ):
                    continue
                if _contains(
                    ekeys,
                    ne,
                    (<long long> cell) << 40
                    | (<long long> target) << 20
                    | nt,
                ):
                    continue
                nh = abs(target // width - goal_r) + abs(target % width - goal_c)
                if nt + nh > horizon:
                    continue
                seen[target * (horizon + 1) + nt] = 1
                parent[target * (horizon + 1) + nt] = cell
                _heap_push(
                    &heap,
                    (<long long> (nt + nh)) << 45
                    | (<long long> nh) << 25
                    | seq,
                    (<long long> target) << 20 | nt,
                )
                seq += 1
        return None, int(expansions)
    finally:
        free(vkeys)
        free(ekeys)
        free(heap.keys)
        free(heap.vals)
        free(seen)
        free(parent)
