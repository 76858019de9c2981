"""Compiled inner loops (numba).

Everything here works on plain arrays; the Python modules own the data model.
"""

import numpy as np
from numba import config, njit, prange

# the bundled TBB is too old on some systems; prefer OpenMP
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

BARY_TOL = 1e-12


# -- point location on 2D triangulations ------------------------------------

@njit(cache=True)
def build_buckets(verts, tris, origin, cell, nbx, nby):
    """CSR lists of triangles whose bounding box touches each bucket."""
    ne = tris.shape[0]
    counts = np.zeros(nbx * nby + 1, dtype=np.int64)
    ranges = np.empty((ne, 4), dtype=np.int64)
    for e in range(ne):
        xmin = np.inf
        xmax = -np.inf
        ymin = np.inf
        ymax = -np.inf
        for k in range(3):
            px = verts[tris[e, k], 0]
            py = verts[tris[e, k], 1]
            xmin = min(xmin, px)
            xmax = max(xmax, px)
            ymin = min(ymin, py)
            ymax = max(ymax, py)
        i0 = max(int(np.floor((xmin - origin[0]) / cell)), 0)
        i1 = min(int(np.floor((xmax - origin[0]) / cell)), nbx - 1)
        j0 = max(int(np.floor((ymin - origin[1]) / cell)), 0)
        j1 = min(int(np.floor((ymax - origin[1]) / cell)), nby - 1)
        ranges[e, 0] = i0
        ranges[e, 1] = i1
        ranges[e, 2] = j0
        ranges[e, 3] = j1
        for j in range(j0, j1 + 1):
            for i in range(i0, i1 + 1):
                counts[j * nbx + i + 1] += 1
    start = np.cumsum(counts)
    fill = start[:-1].copy()
    items = np.empty(start[-1], dtype=np.int64)
    for e in range(ne):
        for j in range(ranges[e, 2], ranges[e, 3] + 1):
            for i in range(ranges[e, 0], ranges[e, 1] + 1):
                b = j * nbx + i
                items[fill[b]] = e
                fill[b] += 1
    return start, items


@njit(cache=True)
def _bary(tri_p0, tri_inv, e, x, y, out):
    dx = x - tri_p0[e, 0]
    dy = y - tri_p0[e, 1]
    l1 = tri_inv[e, 0, 0] * dx + tri_inv[e, 0, 1] * dy
    l2 = tri_inv[e, 1, 0] * dx + tri_inv[e, 1, 1] * dy
    out[0] = 1.0 - l1 - l2
    out[1] = l1
    out[2] = l2


@njit(cache=True)
def _closest_on_triangle(ax, ay, bx, by, cx, cy, px, py):
    # closest point on a triangle, Voronoi-region walk (Ericson, RTCD 5.1.5)
    abx = bx - ax
    aby = by - ay
    acx = cx - ax
    acy = cy - ay
    apx = px - ax
    apy = py - ay
    d1 = abx * apx + aby * apy
    d2 = acx * apx + acy * apy
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay
    bpx = px - bx
    bpy = py - by
    d3 = abx * bpx + aby * bpy
    d4 = acx * bpx + acy * bpy
    if d3 >= 0.0 and d4 <= d3:
        return bx, by
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby
    cpx = px - cx
    cpy = py - cy
    d5 = abx * cpx + aby * cpy
    d6 = acx * cpx + acy * cpy
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w


@njit(cache=True)
def _normalize(lam):
    s = 0.0
    for k in range(3):
        if lam[k] < 0.0:
            lam[k] = 0.0
        s += lam[k]
    for k in range(3):
        lam[k] /= s


@njit(parallel=True, cache=True)
def locate_2d(pts, verts, tris, tri_p0, tri_inv, origin, cell, nbx, nby,
              start, items, max_dist, elem, bary, proj, status):
    """status: 0 inside, 1 projected onto the hull, 2 too far outside."""
    n = pts.shape[0]
    for q in prange(n):
        lam = np.empty(3)
        px = pts[q, 0]
        py = pts[q, 1]
        proj[q, 0] = px
        proj[q, 1] = py
        bi = min(max(int(np.floor((px - origin[0]) / cell)), 0), nbx - 1)
        bj = min(max(int(np.floor((py - origin[1]) / cell)), 0), nby - 1)
        b = bj * nbx + bi
        found = -1
        for k in range(start[b], start[b + 1]):
            e = items[k]
            _bary(tri_p0, tri_inv, e, px, py, lam)
            if lam[0] >= -BARY_TOL and lam[1] >= -BARY_TOL and lam[2] >= -BARY_TOL:
                found = e
                break
        if found >= 0:
            _normalize(lam)
            elem[q] = found
            for k in range(3):
                bary[q, k] = lam[k]
            status[q] = 0
            continue
        # outside the hull: nearest point over the neighbouring buckets
        best = np.inf
        be = -1
        bqx = px
        bqy = py
        for jj in range(max(bj - 1, 0), min(bj + 2, nby)):
            for ii in range(max(bi - 1, 0), min(bi + 2, nbx)):
                bb = jj * nbx + ii
                for k in range(start[bb], start[bb + 1]):
                    e = items[k]
                    t0 = tris[e, 0]
                    t1 = tris[e, 1]
                    t2 = tris[e, 2]
                    qx, qy = _closest_on_triangle(
                        verts[t0, 0], verts[t0, 1], verts[t1, 0], verts[t1, 1],
                        verts[t2, 0], verts[t2, 1], px, py)
                    d2 = (qx - px) ** 2 + (qy - py) ** 2
                    if d2 < best:
                        best = d2
                        be = e
                        bqx = qx
                        bqy = qy
        if be < 0 or np.sqrt(best) > max_dist:
            elem[q] = -1
            status[q] = 2
            continue
        _bary(tri_p0, tri_inv, be, bqx, bqy, lam)
        _normalize(lam)
        elem[q] = be
        for k in range(3):
            bary[q, k] = lam[k]
        proj[q, 0] = bqx
        proj[q, 1] = bqy
        status[q] = 1


# -- scheme sweeps -----------------------------------------------------------

@njit(parallel=True, cache=True)
def min_over_controls(idx, w, const, v, out_val, out_arg):
    """out_val[i] = min_c const[i,c] + sum_s w[i,c,s] v[idx[i,c,s]].

    Strict comparison, so ties go to the first control in list order.
    """
    n, C, S = idx.shape
    for i in prange(n):
        best = np.inf
        arg = -1
        for c in range(C):
            acc = const[i, c]
            for s in range(S):
                acc += w[i, c, s] * v[idx[i, c, s]]
            if acc < best:
                best = acc
                arg = c
        out_val[i] = best
        out_arg[i] = arg


@njit(parallel=True, cache=True)
def apply_all(idx, w, const, v, out):
    n, C, S = idx.shape
    for i in prange(n):
        for c in range(C):
            acc = const[i, c]
            for s in range(S):
                acc += w[i, c, s] * v[idx[i, c, s]]
            out[i, c] = acc


@njit(cache=True)
def scatter_add(flat, rows, vals):
    # sequential on purpose: fixed summation order
    for k in range(rows.shape[0]):
        flat[rows[k]] += vals[k]
