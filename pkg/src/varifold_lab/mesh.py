"""Multiplicity-weighted triangle meshes in R^n and their measure.

A :class:`DiscreteVarifold` is an immutable indexed triangle mesh with a
positive integer multiplicity per face. Its measure is
``mu = sum_f theta_f * area(f)``; everything else in the package is built on
the services here (areas, adjacency, vertex weights, ball masses).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from . import kernels
from .errors import DegenerateFace, InputError, InvalidIndex, NonPositiveMultiplicity

DEGENERATE_REL_TOL = 1e-14

TAG_INTERIOR = "interior"
TAG_BOUNDARY = "boundary"
TAG_JUNCTION = "junction"


# ---------------------------------------------------------------- geometry

def triangle_geometry(X, F):
    """Per-face edge data valid in any ambient dimension.

    Returns ``(double_area, cot)`` where ``cot[:, i]`` is the cotangent of the
    corner angle at local vertex ``i`` (opposite edge ``(i+1, i+2)``).
    """
    p = X[F]  # (F, 3, n)
    cot = np.empty((F.shape[0], 3))
    dbl = None
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        w = p[:, (i + 2) % 3] - p[:, i]
        uw = np.einsum("ij,ij->i", u, w)
        uu = np.einsum("ij,ij->i", u, u)
        ww = np.einsum("ij,ij->i", w, w)
        d = np.sqrt(np.maximum(uu * ww - uw * uw, 0.0))
        if dbl is None:
            dbl = d
        with np.errstate(divide="ignore", invalid="ignore"):
            cot[:, i] = uw / d
    return dbl, cot


def corner_angles(X, F):
    p = X[F]
    ang = np.empty((F.shape[0], 3))
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        w = p[:, (i + 2) % 3] - p[:, i]
        uw = np.einsum("ij,ij->i", u, w)
        cr = np.sqrt(np.maximum(np.einsum("ij,ij->i", u, u) * np.einsum("ij,ij->i", w, w) - uw * uw, 0.0))
        ang[:, i] = np.arctan2(cr, uw)
    return ang


def cotan_laplacian(X, F, weights=None):
    """Sparse operator with ``(L x)_v = sum_u w_vu (x_u - x_v)``.

    ``w_vu`` is half the (weighted) sum of cotangents opposite edge ``vu``.
    With this sign ``L x / area`` is the mean curvature vector (inward on a
    sphere).
    """
    N = X.shape[0]
    _, cot = triangle_geometry(X, F)
    if weights is not None:
        cot = cot * np.asarray(weights, dtype=float)[:, None]
    rows, cols, vals = [], [], []
    for i in range(3):
        a = F[:, (i + 1) % 3]
        b = F[:, (i + 2) % 3]
        rows += [a, b]
        cols += [b, a]
        vals += [0.5 * cot[:, i], 0.5 * cot[:, i]]
    W = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    return (W - sparse.diags(np.asarray(W.sum(axis=1)).ravel())).tocsr()


def mixed_face_areas(X, F, barycentric_faces=None):
    """Split each face's area among its corners (mixed Voronoi scheme).

    Non-obtuse faces use Voronoi regions, obtuse faces the half/quarter rule.
    Faces flagged in ``barycentric_faces`` use equal thirds. Rows sum to the
    face area exactly up to roundoff.
    """
    dbl, cot = triangle_geometry(X, F)
    area = 0.5 * dbl
    p = X[F]
    esq = np.empty((F.shape[0], 3))  # squared length of edge opposite corner i
    for i in range(3):
        e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        esq[:, i] = np.einsum("ij,ij->i", e, e)
    out = np.empty((F.shape[0], 3))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        # edge i-j is opposite corner k, edge i-k opposite corner j
        out[:, i] = (esq[:, k] * cot[:, k] + esq[:, j] * cot[:, j]) / 8.0
    obtuse = cot < 0.0
    any_obt = obtuse.any(axis=1)
    out[any_obt] = np.where(obtuse[any_obt], area[any_obt, None] / 2.0, area[any_obt, None] / 4.0)
    if barycentric_faces is not None:
        bf = np.asarray(barycentric_faces, dtype=bool)
        out[bf] = area[bf, None] / 3.0
    return out


def scatter_vertex(F, per_corner, N):
    out = np.zeros(N)
    np.add.at(out, F.ravel(), per_corner.ravel())
    return out


def fsum(a):
    return math.fsum(np.asarray(a, dtype=float).ravel())


# ---------------------------------------------------------------- data type

@dataclass(frozen=True, eq=False)
class DiscreteVarifold:
    """Indexed triangle mesh in R^n with per-face integer multiplicity.

    Use :func:`build` to construct one; it validates and freezes the arrays.
    """

    vertices: np.ndarray
    faces: np.ndarray
    multiplicity: np.ndarray
    tags: np.ndarray = field(repr=False)

    @property
    def ambient_dim(self) -> int:
        return int(self.vertices.shape[1])

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    def __repr__(self):
        return (f"DiscreteVarifold(n={self.ambient_dim}, vertices={self.n_vertices}, "
                f"faces={self.n_faces}, theta_max={int(self.multiplicity.max())})")

    # -- cached derived data
    @cached_property
    def face_areas(self) -> np.ndarray:
        dbl, _ = triangle_geometry(self.vertices, self.faces)
        return _frozen(0.5 * dbl)

    @cached_property
    def theta(self) -> np.ndarray:
        return _frozen(self.multiplicity.astype(float))

    @cached_property
    def edges(self):
        """Unique undirected edges ``(E, 2)`` and their incident face counts."""
        e = np.sort(np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return _frozen(uniq), _frozen(counts)

    @cached_property
    def vertex_faces(self) -> sparse.csr_matrix:
        """Vertex-by-face incidence (CSR)."""
        F = self.faces
        rows = F.ravel()
        cols = np.repeat(np.arange(F.shape[0]), 3)
        return sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(self.n_vertices, self.n_faces))

    @cached_property
    def masked(self) -> np.ndarray:
        """Vertices whose tag is not ``interior``."""
        return _frozen(self.tags != TAG_INTERIOR)

    @cached_property
    def face_touches_mask(self) -> np.ndarray:
        return _frozen(self.masked[self.faces].any(axis=1))

    @cached_property
    def corner_areas(self) -> np.ndarray:
        """Unweighted per-corner area shares (mixed Voronoi / barycentric)."""
        return _frozen(mixed_face_areas(self.vertices, self.faces, self.face_touches_mask))

    @cached_property
    def vertex_areas(self) -> np.ndarray:
        """Multiplicity-weighted vertex areas; they partition the total mass."""
        return _frozen(scatter_vertex(self.faces, self.corner_areas * self.theta[:, None], self.n_vertices))

    @cached_property
    def geometric_vertex_areas(self) -> np.ndarray:
        return _frozen(scatter_vertex(self.faces, self.corner_areas, self.n_vertices))

    @cached_property
    def face_centroids(self) -> np.ndarray:
        return _frozen(self.vertices[self.faces].mean(axis=1))

    @cached_property
    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e, _ = self.edges
        return _frozen(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1))

    @cached_property
    def median_edge_length(self) -> float:
        return float(np.median(self.edge_lengths))

    @cached_property
    def local_edge_length(self) -> np.ndarray:
        """Longest incident edge per vertex."""
        e, _ = self.edges
        out = np.zeros(self.n_vertices)
        np.maximum.at(out, e[:, 0], self.edge_lengths)
        np.maximum.at(out, e[:, 1], self.edge_lengths)
        return _frozen(out)

    @property
    def is_closed(self) -> bool:
        _, counts = self.edges
        return bool((counts >= 2).all())

    @cached_property
    def euler_characteristic(self) -> int:
        e, _ = self.edges
        return int(self.n_vertices - e.shape[0] + self.n_faces)

    @cached_property
    def face_frames(self):
        """Orthonormal in-plane frames used by the clipping kernels."""
        X, F = self.vertices, self.faces
        o = X[F[:, 0]]
        u = X[F[:, 1]] - o
        w = X[F[:, 2]] - o
        l1 = np.linalg.norm(u, axis=1)
        e1 = u / l1[:, None]
        bx = np.einsum("ij,ij->i", w, e1)
        w2 = w - bx[:, None] * e1
        by = np.linalg.norm(w2, axis=1)
        e2 = w2 / by[:, None]
        tri = np.stack([l1, bx, by], axis=1)
        cen = self.face_centroids
        bound = np.linalg.norm(X[F] - cen[:, None, :], axis=2).max(axis=1)
        return tuple(np.ascontiguousarray(a) for a in (o, e1, e2, tri, cen, bound))

    @cached_property
    def centroid_tree(self) -> cKDTree:
        return cKDTree(self.face_centroids)


def _frozen(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------- build

def compute_tags(faces, n_vertices):
    e = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    tags = np.full(n_vertices, TAG_INTERIOR, dtype=object)
    tags[uniq[counts == 1].ravel()] = TAG_BOUNDARY
    tags[uniq[counts >= 3].ravel()] = TAG_JUNCTION
    return tags


def _merge_tags(tags, extra, n):
    if extra is None:
        return tags
    if isinstance(extra, dict):
        for label, idx in extra.items():
            idx = np.asarray(idx, dtype=int)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise InvalidIndex(f"tag {label!r} references a vertex outside [0, {n})")
            if label != TAG_INTERIOR:
                tags[idx] = label
        return tags
    extra = np.asarray(extra, dtype=object)
    if extra.shape != (n,):
        raise InputError(f"tags must have one entry per vertex ({n}), got shape {extra.shape}")
    keep = extra != TAG_INTERIOR
    tags[keep] = extra[keep]
    return tags


def build(vertices, faces, multiplicity=None, ambient_dim=None, tags=None) -> DiscreteVarifold:
    """Validate raw arrays and return a :class:`DiscreteVarifold`.

    Parameters
    ----------
    vertices : (N, k) array_like
        Vertex positions. If ``ambient_dim > k`` the points are padded with
        zero coordinates.
    faces : (F, 3) array_like of int
    multiplicity : (F,) array_like of int, optional
        Defaults to 1 on every face.
    ambient_dim : int, optional
        Must be at least 3.
    tags : dict or sequence, optional
        Extra vertex labels (``{"junction": [...]}`` or one label per vertex).
        Topological labels computed from edge incidence cannot be demoted.

    Raises
    ------
    InvalidIndex, NonPositiveMultiplicity, DegenerateFace
    """
    X = np.array(vertices, dtype=np.float64, ndmin=2)
    if X.ndim != 2:
        raise InputError("vertices must be a 2-d array")
    n = X.shape[1] if ambient_dim is None else int(ambient_dim)
    if n < 3:
        raise InputError(f"ambient dimension must be >= 3, got {n}")
    if X.shape[1] > n:
        raise InputError(f"vertices have {X.shape[1]} coordinates but ambient_dim={n}")
    if X.shape[1] < n:
        X = np.hstack([X, np.zeros((X.shape[0], n - X.shape[1]))])
    if not np.isfinite(X).all():
        raise InputError("vertex coordinates must be finite")

    Fr = np.asarray(faces)
    if Fr.ndim != 2 or Fr.shape[1] != 3 or Fr.shape[0] == 0:
        raise InvalidIndex("faces must be a non-empty (F, 3) integer array")
    if not np.issubdtype(Fr.dtype, np.integer):
        if not np.all(np.equal(np.mod(Fr, 1), 0)):
            raise InvalidIndex("face indices must be integers")
    F = Fr.astype(np.int64)
    N = X.shape[0]
    bad = (F < 0) | (F >= N)
    if bad.any():
        f = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise InvalidIndex(f"face {f} references a vertex outside [0, {N})")
    rep = (F[:, 0] == F[:, 1]) | (F[:, 1] == F[:, 2]) | (F[:, 0] == F[:, 2])
    if rep.any():
        raise InvalidIndex(f"face {int(np.argmax(rep))} repeats a vertex")
    used = np.zeros(N, dtype=bool)
    used[F.ravel()] = True
    if not used.all():
        raise InvalidIndex(f"vertex {int(np.argmin(used))} is not referenced by any face")

    if multiplicity is None:
        theta = np.ones(F.shape[0], dtype=np.int64)
    else:
        th = np.asarray(multiplicity)
        if th.shape != (F.shape[0],):
            raise InputError(f"multiplicity must have one entry per face ({F.shape[0]})")
        if not np.all(np.equal(np.mod(th, 1), 0)):
            raise NonPositiveMultiplicity("multiplicities must be integers")
        theta = th.astype(np.int64)
        if (theta < 1).any():
            raise NonPositiveMultiplicity(f"face {int(np.argmax(theta < 1))} has multiplicity {int(theta.min())} < 1")

    diag = float(np.linalg.norm(X.max(axis=0) - X.min(axis=0)))
    dbl, _ = triangle_geometry(X, F)
    small = 0.5 * dbl < DEGENERATE_REL_TOL * diag * diag
    if small.any():
        raise DegenerateFace(f"face {int(np.argmax(small))} has area below {DEGENERATE_REL_TOL:g} x diag^2")

    tg = _merge_tags(compute_tags(F, N), tags, N)
    return DiscreteVarifold(_frozen(X), _frozen(F), _frozen(theta), _frozen(tg))


def with_vertices(v: DiscreteVarifold, X) -> DiscreteVarifold:
    """Same connectivity, multiplicity and tags with new positions."""
    return build(X, v.faces, v.multiplicity, tags=v.tags)


def with_multiplicity(v: DiscreteVarifold, theta) -> DiscreteVarifold:
    theta = np.broadcast_to(np.asarray(theta), (v.n_faces,))
    return build(v.vertices, v.faces, theta, tags=v.tags)


def submesh(v: DiscreteVarifold, keep_faces) -> tuple[DiscreteVarifold, np.ndarray]:
    """Keep a subset of faces and drop orphaned vertices.

    Returns the new mesh and the old index of every kept vertex.
    """
    keep_faces = np.asarray(keep_faces)
    if keep_faces.dtype == bool:
        keep_faces = np.flatnonzero(keep_faces)
    F = v.faces[keep_faces]
    old = np.unique(F.ravel())
    remap = np.full(v.n_vertices, -1, dtype=np.int64)
    remap[old] = np.arange(old.size)
    extra = {t: np.flatnonzero(v.tags[old] == t) for t in set(v.tags[old]) if t != TAG_INTERIOR}
    out = build(v.vertices[old], remap[F], v.multiplicity[keep_faces], tags=extra)
    return out, old


def disjoint_union(*parts: DiscreteVarifold) -> DiscreteVarifold:
    Xs, Fs, Ts, tags = [], [], [], []
    off = 0
    n = max(p.ambient_dim for p in parts)
    for p in parts:
        X = p.vertices
        if X.shape[1] < n:
            X = np.hstack([X, np.zeros((X.shape[0], n - X.shape[1]))])
        Xs.append(X)
        Fs.append(p.faces + off)
        Ts.append(p.multiplicity)
        tags.append(p.tags)
        off += p.n_vertices
    return build(np.vstack(Xs), np.vstack(Fs), np.concatenate(Ts), tags=np.concatenate(tags))


# ---------------------------------------------------------------- measure

def total_mass(v: DiscreteVarifold) -> float:
    """``sum_f theta_f * area(f)`` with compensated summation."""
    return fsum(v.theta * v.face_areas)


def mass_centroid(v: DiscreteVarifold) -> np.ndarray:
    w = v.theta * v.face_areas
    c = v.face_centroids
    return np.array([fsum(w * c[:, d]) for d in range(v.ambient_dim)]) / total_mass(v)


def ball_masses(v: DiscreteVarifold, centers, radii, backend=None) -> np.ndarray:
    """Exact ``mu(B(x, r))`` for every center (rows) and radius (columns).

    Faces crossing the sphere are clipped exactly: the ball meets the face
    plane in a disk, and the disk/triangle overlap is integrated edge by edge
    (circular sectors plus chord triangles).
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if (radii <= 0).any():
        raise InputError("radii must be positive")
    if centers.shape[1] != v.ambient_dim:
        raise InputError(f"centers must live in R^{v.ambient_dim}")
    o, e1, e2, tri, cen, bound = v.face_frames
    reach = float(radii.max() + bound.max())
    area = np.ascontiguousarray(v.face_areas, dtype=float)
    theta = np.ascontiguousarray(v.theta)
    rr = np.ascontiguousarray(radii)
    if kernels.backend(backend) == "numba":
        grid = kernels.face_grid(cen, reach)
        return kernels.ball_mass_grid_nb(np.ascontiguousarray(centers), rr, *grid, o, e1, e2, tri, cen, bound,
                                         area, theta)
    tree = v.centroid_tree
    out = np.empty((centers.shape[0], radii.size))
    step = 4096
    for lo in range(0, centers.shape[0], step):
        c = np.ascontiguousarray(centers[lo:lo + step])
        lists = tree.query_ball_point(c, reach, return_sorted=True)
        lens = np.fromiter((len(x) for x in lists), dtype=np.int64, count=len(lists))
        indptr = np.zeros(len(lists) + 1, dtype=np.int64)
        np.cumsum(lens, out=indptr[1:])
        cand = np.fromiter((i for x in lists for i in x), dtype=np.int64, count=int(indptr[-1]))
        out[lo:lo + step] = kernels.ball_mass_csr_np(c, rr, indptr, cand, o, e1, e2, tri, cen, bound, area, theta)
    return out


def ball_mass(v: DiscreteVarifold, center, r, backend=None) -> float:
    """``mu(B(center, r))``."""
    if not r > 0:
        raise InputError("ball radius must be positive")
    return float(ball_masses(v, [center], [r], backend=backend)[0, 0])


def halfspace_mass(v: DiscreteVarifold, normal, offset) -> float:
    """Mass of ``{x : <x, normal> <= offset}``, clipping faces exactly."""
    nrm = np.asarray(normal, dtype=float)
    s = v.vertices @ nrm - offset
    sf = s[v.faces]
    inside = sf <= 0
    k = inside.sum(axis=1)
    A = v.face_areas
    frac = np.where(k == 3, 1.0, 0.0)
    for m in (1, 2):
        rows = np.flatnonzero(k == m)
        if rows.size == 0:
            continue
        ss = sf[rows]
        # the lone vertex: the inside one when m == 1, the outside one when m == 2
        lone = np.argmax(inside[rows] if m == 1 else ~inside[rows], axis=1)
        a = ss[np.arange(rows.size), lone]
        b = ss[np.arange(rows.size), (lone + 1) % 3]
        c = ss[np.arange(rows.size), (lone + 2) % 3]
        corner = (a / (a - b)) * (a / (a - c))
        frac[rows] = corner if m == 1 else 1.0 - corner
    return fsum(v.theta * A * frac)


def diameter(v: DiscreteVarifold, backend=None):
    """Largest vertex distance and an attaining pair ``(i, j)``, ``i < j``.

    Near-ties (relative 1e-12) go to the lexicographically smallest pair.
    """
    _, (i, j) = kernels.farthest_pair(v.vertices, backend_name=backend)
    return float(np.linalg.norm(v.vertices[i] - v.vertices[j])), (i, j)


def normalize_mass(v: DiscreteVarifold, target: float = 4 * math.pi) -> DiscreteVarifold:
    """Scale about the mass centroid so that ``total_mass == target``."""
    mu = total_mass(v)
    if not mu > 0:
        raise InputError("mesh has no mass")
    c = mass_centroid(v)
    lam = math.sqrt(target / mu)
    return with_vertices(v, c + lam * (v.vertices - c))
