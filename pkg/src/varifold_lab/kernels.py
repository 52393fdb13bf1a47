"""Hot loops: triangle/ball clipping over many centers and the O(N^2) diameter.

Every kernel exists twice, ``*_nb`` (numba) and ``*_np`` (numpy). The public
wrappers pick one via :func:`backend`. Results agree up to summation order:
numba sums with Neumaier compensation, numpy sums pairwise.
"""
import math

import numpy as np

from ._accel import njit, numba_enabled, prange


def backend(name=None):
    """Resolve a backend name: ``"numba"``, ``"numpy"`` or ``None`` (auto)."""
    if name is None:
        return "numba" if numba_enabled() else "numpy"
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not numba_enabled():
        return "numpy"
    return name


# ---------------------------------------------------------------- disk clip

@njit(cache=True)
def _edge_term_nb(ax, ay, bx, by, r2):
    # signed area of disk(0, sqrt(r2)) intersected with triangle (0, a, b)
    dx = bx - ax
    dy = by - ay
    a = dx * dx + dy * dy
    if a == 0.0:
        return 0.0
    b = ax * dx + ay * dy
    c = ax * ax + ay * ay - r2
    disc = b * b - a * c
    if disc > 0.0:
        s = math.sqrt(disc)
        t1 = min(max((-b - s) / a, 0.0), 1.0)
        t2 = min(max((-b + s) / a, 0.0), 1.0)
        if t1 < t2:
            p1x = ax + t1 * dx
            p1y = ay + t1 * dy
            p2x = ax + t2 * dx
            p2y = ay + t2 * dy
            out = 0.5 * (p1x * p2y - p1y * p2x)
            if t1 > 0.0:
                out += 0.5 * r2 * math.atan2(ax * p1y - ay * p1x, ax * p1x + ay * p1y)
            if t2 < 1.0:
                out += 0.5 * r2 * math.atan2(p2x * by - p2y * bx, p2x * bx + p2y * by)
            return out
    return 0.5 * r2 * math.atan2(ax * by - ay * bx, ax * bx + ay * by)


@njit(cache=True)
def _disk_triangle_nb(cx, cy, r2, l1, bx, by):
    x0 = -cx
    y0 = -cy
    x1 = l1 - cx
    y1 = -cy
    x2 = bx - cx
    y2 = by - cy
    s = _edge_term_nb(x0, y0, x1, y1, r2)
    s += _edge_term_nb(x1, y1, x2, y2, r2)
    s += _edge_term_nb(x2, y2, x0, y0, r2)
    return abs(s)


def _edge_term_np(ax, ay, bx, by, r2):
    dx = bx - ax
    dy = by - ay
    a = dx * dx + dy * dy
    b = ax * dx + ay * dy
    c = ax * ax + ay * ay - r2
    disc = b * b - a * c
    full = 0.5 * r2 * np.arctan2(ax * by - ay * bx, ax * bx + ay * by)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.sqrt(np.maximum(disc, 0.0))
        t1 = np.clip((-b - s) / a, 0.0, 1.0)
        t2 = np.clip((-b + s) / a, 0.0, 1.0)
    hit = (a > 0.0) & (disc > 0.0) & (t1 < t2)
    t1 = np.where(hit, t1, 0.0)
    t2 = np.where(hit, t2, 1.0)
    p1x, p1y = ax + t1 * dx, ay + t1 * dy
    p2x, p2y = ax + t2 * dx, ay + t2 * dy
    chord = 0.5 * (p1x * p2y - p1y * p2x)
    sec1 = np.where(t1 > 0.0, 0.5 * r2 * np.arctan2(ax * p1y - ay * p1x, ax * p1x + ay * p1y), 0.0)
    sec2 = np.where(t2 < 1.0, 0.5 * r2 * np.arctan2(p2x * by - p2y * bx, p2x * bx + p2y * by), 0.0)
    return np.where(hit, chord + sec1 + sec2, np.where(a > 0.0, full, 0.0))


def disk_triangle_area(cx, cy, r2, l1, bx, by):
    """Area of disk(c, sqrt(r2)) ∩ triangle((0,0), (l1,0), (bx,by)), vectorized."""
    x0, y0 = -cx, -cy
    x1, y1 = l1 - cx, -cy
    x2, y2 = bx - cx, by - cy
    s = _edge_term_np(x0, y0, x1, y1, r2)
    s = s + _edge_term_np(x1, y1, x2, y2, r2)
    s = s + _edge_term_np(x2, y2, x0, y0, r2)
    return np.abs(s)


# ---------------------------------------------------------------- ball mass

@njit(parallel=True, cache=True)
def ball_mass_csr_nb(centers, radii, indptr, cand, origin, e1, e2, tri, centroid, bound, area, theta):
    K = centers.shape[0]
    R = radii.shape[0]
    n = centers.shape[1]
    out = np.zeros((K, R))
    for k in prange(K):
        acc = np.zeros(R)
        comp = np.zeros(R)
        for idx in range(indptr[k], indptr[k + 1]):
            f = cand[idx]
            dc2 = 0.0
            w2 = 0.0
            wx = 0.0
            wy = 0.0
            for d in range(n):
                t = centers[k, d] - centroid[f, d]
                dc2 += t * t
                w = centers[k, d] - origin[f, d]
                w2 += w * w
                wx += w * e1[f, d]
                wy += w * e2[f, d]
            dc = math.sqrt(dc2)
            dn2 = max(w2 - wx * wx - wy * wy, 0.0)
            for j in range(R):
                r = radii[j]
                if dc - bound[f] >= r:
                    continue
                if dc + bound[f] <= r:
                    val = area[f] * theta[f]
                else:
                    rho2 = r * r - dn2
                    if rho2 <= 0.0:
                        continue
                    val = theta[f] * _disk_triangle_nb(wx, wy, rho2, tri[f, 0], tri[f, 1], tri[f, 2])
                # Neumaier compensated sum
                t = acc[j] + val
                if abs(acc[j]) >= abs(val):
                    comp[j] += (acc[j] - t) + val
                else:
                    comp[j] += (val - t) + acc[j]
                acc[j] = t
        for j in range(R):
            out[k, j] = acc[j] + comp[j]
    return out


@njit(parallel=True, cache=True)
def ball_mass_grid_nb(centers, radii, lo, cell, dims, cell_start, order, origin, e1, e2, tri, centroid,
                      bound, area, theta):
    # candidate faces come from a uniform grid over the first three coordinates
    K = centers.shape[0]
    R = radii.shape[0]
    n = centers.shape[1]
    out = np.zeros((K, R))
    rmax = radii.max()
    for k in prange(K):
        acc = np.zeros(R)
        comp = np.zeros(R)
        c0 = int(math.floor((centers[k, 0] - lo[0]) / cell))
        c1 = int(math.floor((centers[k, 1] - lo[1]) / cell))
        c2 = int(math.floor((centers[k, 2] - lo[2]) / cell))
        for a in range(max(c0 - 1, 0), min(c0 + 2, dims[0])):
            for b in range(max(c1 - 1, 0), min(c1 + 2, dims[1])):
                for c in range(max(c2 - 1, 0), min(c2 + 2, dims[2])):
                    key = (a * dims[1] + b) * dims[2] + c
                    for idx in range(cell_start[key], cell_start[key + 1]):
                        f = order[idx]
                        dc2 = 0.0
                        for d in range(n):
                            t = centers[k, d] - centroid[f, d]
                            dc2 += t * t
                        reach = rmax + bound[f]
                        if dc2 >= reach * reach:
                            continue
                        w2 = 0.0
                        wx = 0.0
                        wy = 0.0
                        for d in range(n):
                            w = centers[k, d] - origin[f, d]
                            w2 += w * w
                            wx += w * e1[f, d]
                            wy += w * e2[f, d]
                        dc = math.sqrt(dc2)
                        dn2 = max(w2 - wx * wx - wy * wy, 0.0)
                        for j in range(R):
                            r = radii[j]
                            if dc - bound[f] >= r:
                                continue
                            if dc + bound[f] <= r:
                                val = area[f] * theta[f]
                            else:
                                rho2 = r * r - dn2
                                if rho2 <= 0.0:
                                    continue
                                val = theta[f] * _disk_triangle_nb(wx, wy, rho2, tri[f, 0], tri[f, 1], tri[f, 2])
                            t = acc[j] + val
                            if abs(acc[j]) >= abs(val):
                                comp[j] += (acc[j] - t) + val
                            else:
                                comp[j] += (val - t) + acc[j]
                            acc[j] = t
        for j in range(R):
            out[k, j] = acc[j] + comp[j]
    return out


def face_grid(centroid, reach, max_cells=4_000_000):
    """Bucket face centroids into cubic cells of side >= ``reach`` (first 3 axes)."""
    P = centroid[:, :3]
    lo = P.min(axis=0) - 1e-9
    ext = P.max(axis=0) - lo + 1e-9
    cell = float(reach)
    while np.prod(np.floor(ext / cell) + 1) > max_cells:
        cell *= 1.5
    dims = (np.floor(ext / cell) + 1).astype(np.int64)
    ijk = np.minimum(np.floor((P - lo) / cell).astype(np.int64), dims - 1)
    key = (ijk[:, 0] * dims[1] + ijk[:, 1]) * dims[2] + ijk[:, 2]
    order = np.argsort(key, kind="stable")
    cell_start = np.searchsorted(key[order], np.arange(int(np.prod(dims)) + 1)).astype(np.int64)
    return np.ascontiguousarray(lo), cell, dims, cell_start, order.astype(np.int64)


def ball_mass_csr_np(centers, radii, indptr, cand, origin, e1, e2, tri, centroid, bound, area, theta):
    K = centers.shape[0]
    R = radii.shape[0]
    out = np.zeros((K, R))
    r = radii[:, None]
    for k in range(K):
        f = cand[indptr[k]:indptr[k + 1]]
        if f.size == 0:
            continue
        c = centers[k]
        dc = np.sqrt(((c - centroid[f]) ** 2).sum(axis=1))[None, :]
        b = bound[f][None, :]
        at = (area[f] * theta[f])[None, :]
        inside = dc + b <= r
        vals = np.where(inside, at, 0.0)
        # only faces crossing the sphere need clipping
        w = c - origin[f]
        wx = np.einsum("ij,ij->i", w, e1[f])
        wy = np.einsum("ij,ij->i", w, e2[f])
        dn2 = np.maximum((w * w).sum(axis=1) - wx * wx - wy * wy, 0.0)
        rho2 = r * r - dn2[None, :]
        jj, ii = np.nonzero(~inside & (dc - b < r) & (rho2 > 0.0))
        if ii.size:
            fi = f[ii]
            vals[jj, ii] = theta[fi] * disk_triangle_area(wx[ii], wy[ii], rho2[jj, ii],
                                                            tri[fi, 0], tri[fi, 1], tri[fi, 2])
        out[k] = vals.sum(axis=1)
    return out


def ball_mass_csr(*args, backend_name=None):
    if backend(backend_name) == "numba":
        return ball_mass_csr_nb(*args)
    return ball_mass_csr_np(*args)


# ---------------------------------------------------------------- diameter

@njit(parallel=True, cache=True)
def _row_max_sqdist_nb(X):
    N, n = X.shape
    best = np.full(N, -1.0)
    for i in prange(N):
        b = -1.0
        for j in range(i + 1, N):
            d = 0.0
            for k in range(n):
                t = X[i, k] - X[j, k]
                d += t * t
            if d > b:
                b = d
        best[i] = b
    return best


@njit(cache=True)
def _first_pair_nb(X, thresh):
    N, n = X.shape
    for i in range(N):
        for j in range(i + 1, N):
            d = 0.0
            for k in range(n):
                t = X[i, k] - X[j, k]
                d += t * t
            if d >= thresh:
                return i, j
    return -1, -1


def _sq_block(X, lo, hi):
    blk = np.zeros((hi - lo, X.shape[0]))
    for k in range(X.shape[1]):
        t = X[lo:hi, k][:, None] - X[None, :, k]
        blk += t * t
    rows = np.arange(lo, hi)[:, None]
    blk[np.arange(X.shape[0])[None, :] <= rows] = -1.0
    return blk


def _max_sqdist_np(X, chunk=256):
    best = -1.0
    for lo in range(0, X.shape[0], chunk):
        best = max(best, float(_sq_block(X, lo, min(lo + chunk, X.shape[0])).max()))
    return best


def _first_pair_np(X, thresh, chunk=256):
    for lo in range(0, X.shape[0], chunk):
        blk = _sq_block(X, lo, min(lo + chunk, X.shape[0]))
        hit = np.flatnonzero(blk.ravel() >= thresh)
        if hit.size:
            i, j = divmod(int(hit[0]), X.shape[0])
            return lo + i, j
    return -1, -1


def farthest_pair(X, rel_tie=1e-12, backend_name=None):
    """Largest squared pairwise distance and the lexicographically first pair
    within ``rel_tie`` of it (so near-ties from rounding resolve by index)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        return 0.0, (0, 0)
    if backend(backend_name) == "numba":
        d2 = float(_row_max_sqdist_nb(X).max())
        i, j = _first_pair_nb(X, d2 * (1.0 - rel_tie))
    else:
        d2 = _max_sqdist_np(X)
        i, j = _first_pair_np(X, d2 * (1.0 - rel_tie))
    return d2, (int(i), int(j))
