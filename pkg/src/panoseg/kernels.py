"""Hot inner loops, each in a numba flavour and a pure-numpy flavour.

The public wrappers at the bottom dispatch on ``_accel.BACKEND``.  Both
flavours must agree bit for bit; tests/test_kernels.py checks that.
"""

import numpy as np

from . import _accel
from ._accel import njit, prange


# --------------------------------------------------------------------------
# z-buffer: per pixel, smallest (depth, point index)

@njit
def _zbuffer_numba(pix, depth, npix):
    best = np.full(npix, -1, dtype=np.int64)
    best_depth = np.zeros(npix, dtype=np.float64)
    for i in range(pix.shape[0]):
        p = pix[i]
        if p < 0:
            continue
        b = best[p]
        # ascending scan + strict '<' keeps the smallest index on equal depth
        if b < 0 or depth[i] < best_depth[p]:
            best[p] = i
            best_depth[p] = depth[i]
    return best, best_depth


def _zbuffer_numpy(pix, depth, npix):
    best = np.full(npix, -1, dtype=np.int64)
    best_depth = np.zeros(npix, dtype=np.float64)
    valid = np.flatnonzero(pix >= 0)
    if valid.size == 0:
        return best, best_depth
    order = np.lexsort((valid, depth[valid], pix[valid]))
    sel = valid[order]
    p = pix[sel]
    first = np.ones(sel.size, dtype=bool)
    first[1:] = p[1:] != p[:-1]
    winners = sel[first]
    best[p[first]] = winners
    best_depth[p[first]] = depth[winners]
    return best, best_depth


# --------------------------------------------------------------------------
# nearest occupied pixel within a Chebyshev radius

@njit(parallel=True)
def _nearest_occupied_numba(occupied, radius):
    h, w = occupied.shape
    src = np.full(h * w, -1, dtype=np.int64)
    for q in prange(h * w):
        y = q // w
        x = q - y * w
        if occupied[y, x]:
            src[q] = q
            continue
        for d in range(1, radius + 1):
            found = -1
            # lexicographic (dy, dx) order is row-major order of the source
            for dy in range(-d, d + 1):
                yy = y + dy
                if yy < 0 or yy >= h:
                    continue
                edge_row = dy == -d or dy == d
                for dx in range(-d, d + 1):
                    if not edge_row and dx != -d and dx != d:
                        continue
                    xx = x + dx
                    if xx < 0 or xx >= w:
                        continue
                    if occupied[yy, xx]:
                        found = yy * w + xx
                        break
                if found >= 0:
                    break
            if found >= 0:
                src[q] = found
                break
    return src


def _nearest_occupied_numpy(occupied, radius):
    h, w = occupied.shape
    ys, xs = np.divmod(np.arange(h * w, dtype=np.int64), w)
    occ = occupied.ravel()
    src = np.where(occ, np.arange(h * w, dtype=np.int64), -1)
    todo = ~occ
    for d in range(1, radius + 1):
        if not todo.any():
            break
        found = np.full(h * w, -1, dtype=np.int64)
        for dy in range(-d, d + 1):
            for dx in range(-d, d + 1):
                if max(abs(dy), abs(dx)) != d:
                    continue
                yy = ys + dy
                xx = xs + dx
                ok = todo & (found < 0) & (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
                cand = np.where(ok, yy * w + xx, 0)
                hit = ok & occ[cand]
                found[hit] = cand[hit]
        newly = todo & (found >= 0)
        src[newly] = found[newly]
        todo &= ~newly
    return src


# --------------------------------------------------------------------------
# graph merging over a pre-sorted edge list

@njit
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit
def _graph_merge_numba(n, a, b, w, k, min_size):
    parent = np.arange(n, dtype=np.int64)
    size = np.ones(n, dtype=np.int64)
    thresh = np.full(n, k, dtype=np.float64)  # internal diff 0 + k/1
    for e in range(a.shape[0]):
        ra = _find(parent, a[e])
        rb = _find(parent, b[e])
        if ra == rb:
            continue
        if w[e] <= thresh[ra] and w[e] <= thresh[rb]:
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
            thresh[ra] = w[e] + k / size[ra]
    for e in range(a.shape[0]):
        ra = _find(parent, a[e])
        rb = _find(parent, b[e])
        if ra != rb and (size[ra] < min_size or size[rb] < min_size):
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
    roots = np.empty(n, dtype=np.int64)
    for i in range(n):
        roots[i] = _find(parent, i)
    return roots


def _graph_merge_numpy(n, a, b, w, k, min_size):
    # Sequential by nature: merge order decides the result.
    parent = list(range(n))
    size = [1] * n
    thresh = [float(k)] * n

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    a_l, b_l, w_l = a.tolist(), b.tolist(), w.tolist()
    for ea, eb, ew in zip(a_l, b_l, w_l):
        ra, rb = find(ea), find(eb)
        if ra == rb:
            continue
        if ew <= thresh[ra] and ew <= thresh[rb]:
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
            thresh[ra] = ew + k / size[ra]
    for ea, eb in zip(a_l, b_l):
        ra, rb = find(ea), find(eb)
        if ra != rb and (size[ra] < min_size or size[rb] < min_size):
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
    return np.array([find(i) for i in range(n)], dtype=np.int64)


# --------------------------------------------------------------------------
# dispatch

def zbuffer(pix, depth, npix, backend=None):
    """Winner index and depth per pixel; ``pix < 0`` marks skipped points."""
    pix = np.ascontiguousarray(pix, dtype=np.int64)
    depth = np.ascontiguousarray(depth, dtype=np.float64)
    if (backend or _accel.BACKEND) == "numba":
        return _zbuffer_numba(pix, depth, int(npix))
    return _zbuffer_numpy(pix, depth, int(npix))


def nearest_occupied(occupied, radius, backend=None):
    """Row-major source pixel for every pixel, or -1 when nothing is in reach."""
    occupied = np.ascontiguousarray(occupied, dtype=np.bool_)
    radius = int(min(radius, max(occupied.shape)))
    if (backend or _accel.BACKEND) == "numba":
        return _nearest_occupied_numba(occupied, radius)
    return _nearest_occupied_numpy(occupied, radius)


def graph_merge(n, a, b, w, k, min_size, backend=None):
    """Union-find root per vertex after threshold merging and the small-component pass."""
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if (backend or _accel.BACKEND) == "numba":
        return _graph_merge_numba(int(n), a, b, w, float(k), int(min_size))
    return _graph_merge_numpy(int(n), a, b, w, float(k), int(min_size))
