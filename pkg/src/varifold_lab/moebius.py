"""Inversion of a weighted mesh in a point and the curvature transformation law.

With ``x`` measured from the pole ``p``, the inversion ``f(x) = x/|x|^2 + p``
maps mean curvature as ``H~ = |x|^2 R_x(H + 4 x^perp / |x|^2)`` where ``R_x``
reflects in the direction ``x`` and the measure picks up ``1/|x|^4``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curvature import mean_curvature, willmore_energy
from .errors import ExcisionTooLarge, InputError, PoleOnMesh, ZeroDirection
from .mesh import DiscreteVarifold, ball_masses, build, fsum, submesh, total_mass
from .monotonicity import density_profile

EXCISION_MAX_FRACTION = 0.10
DEFAULT_ETA_EDGES = 2.5


def inversion_map(X, p):
    """``x -> (x - p)/|x - p|^2 + p`` row-wise."""
    X = np.asarray(X, float)
    p = np.asarray(p, float)
    d = X - p
    r2 = np.einsum("ij,ij->i", d, d)
    if (r2 == 0).any():
        raise PoleOnMesh("cannot invert a point equal to the pole")
    return d / r2[:, None] + p


def reflection(x_dir, w):
    """``R_x(w) = w - 2 <w, x> x / |x|^2``; broadcasts over leading axes."""
    x = np.asarray(x_dir, float)
    w = np.asarray(w, float)
    xx = np.sum(x * x, axis=-1, keepdims=True)
    if np.any(xx == 0):
        raise ZeroDirection("reflection direction must be nonzero")
    return w - 2.0 * np.sum(w * x, axis=-1, keepdims=True) * x / xx


def vertex_tangent_frames(v: DiscreteVarifold) -> np.ndarray:
    """(N, n, 2) orthonormal bases of the area-weighted mean of incident face planes."""
    _, e1, e2, *_ = v.face_frames
    w = v.face_areas * v.theta
    P = w[:, None, None] * (e1[:, :, None] * e1[:, None, :] + e2[:, :, None] * e2[:, None, :])
    n = v.ambient_dim
    M = np.zeros((v.n_vertices, n, n))
    for k in range(3):
        np.add.at(M, v.faces[:, k], P)
    _, vecs = np.linalg.eigh(M)
    return vecs[:, :, -2:]


def perpendicular_at_vertices(v: DiscreteVarifold, vec) -> np.ndarray:
    T = vertex_tangent_frames(v)
    coef = np.einsum("inj,in->ij", T, vec)
    return vec - np.einsum("inj,ij->in", T, coef)


def point_face_distance(v: DiscreteVarifold, p) -> np.ndarray:
    """Euclidean distance from ``p`` to every (closed) face."""
    o, e1, e2, tri, *_ = v.face_frames
    w = np.asarray(p, float) - o
    px = np.einsum("ij,ij->i", w, e1)
    py = np.einsum("ij,ij->i", w, e2)
    dn2 = np.maximum(np.einsum("ij,ij->i", w, w) - px * px - py * py, 0.0)
    l1, bx, by = tri[:, 0], tri[:, 1], tri[:, 2]
    A = np.stack([np.zeros_like(l1), np.zeros_like(l1)], 1)
    B = np.stack([l1, np.zeros_like(l1)], 1)
    C = np.stack([bx, by], 1)
    P = np.stack([px, py], 1)

    def cross(u, q):
        return u[:, 0] * q[:, 1] - u[:, 1] * q[:, 0]

    s1 = cross(B - A, P - A)
    s2 = cross(C - B, P - B)
    s3 = cross(A - C, P - C)
    inside = ((s1 >= 0) & (s2 >= 0) & (s3 >= 0)) | ((s1 <= 0) & (s2 <= 0) & (s3 <= 0))

    def seg(a, b):
        ab = b - a
        t = np.clip(np.einsum("ij,ij->i", P - a, ab) / np.einsum("ij,ij->i", ab, ab), 0.0, 1.0)
        q = a + t[:, None] * ab
        return np.einsum("ij,ij->i", P - q, P - q)

    d2 = np.where(inside, 0.0, np.minimum(np.minimum(seg(A, B), seg(B, C)), seg(C, A)))
    return np.sqrt(d2 + dn2)


@dataclass
class InversionResult:
    image: DiscreteVarifold
    transformed_H: np.ndarray   # (M, n) from the source H via the transformation law
    recomputed_H: np.ndarray    # (M, n) from the image mesh itself
    excised_mass: float
    center: np.ndarray
    excision_radius: float
    source_index: np.ndarray    # image vertex k came from source vertex source_index[k]
    source: DiscreteVarifold

    def vertex_discrepancy(self):
        """Per-vertex ``|transformed - recomputed| / |recomputed|`` where both are defined."""
        ok = np.isfinite(self.transformed_H).all(1) & np.isfinite(self.recomputed_H).all(1)
        num = np.linalg.norm(self.transformed_H[ok] - self.recomputed_H[ok], axis=1)
        return num, ok


@dataclass
class InversionIdentityReport:
    lhs_energy: float
    rhs_energy: float
    energy_minus_density: float
    theta_infinity: float
    theta_at_p: float
    excised_mass: float
    excision_radius: float
    source_energy: float
    cross_term_radii: list = field(default_factory=list)
    cross_term_values: list = field(default_factory=list)

    def as_dict(self):
        return dict(vars(self))


def _default_eta(v, p, dist):
    near = int(np.argmin(np.linalg.norm(v.vertices - p, axis=1)))
    loc = float(v.local_edge_length[near])
    on_mesh = float(dist.min()) <= 1e-9 * v.bbox_diagonal
    return on_mesh, loc


def invert(v: DiscreteVarifold, p, eta: float | None = None) -> InversionResult:
    """Invert ``v`` in ``p`` after excising every face within distance ``eta``.

    Parameters
    ----------
    p : (n,) array_like
    eta : float, optional
        Excision radius. Defaults to 2.5x the local edge length when ``p`` is
        on the mesh, and to half the distance to the mesh otherwise.

    Raises
    ------
    PoleOnMesh
        ``p`` lies on the mesh and ``eta`` is below twice the local edge
        length, or a surviving face comes within ``eta / 10`` of ``p``.
    ExcisionTooLarge
        More than 10% of the mass would be excised.
    """
    p = np.asarray(p, float)
    if p.shape != (v.ambient_dim,):
        raise InputError(f"pole must be a point of R^{v.ambient_dim}")
    dist = point_face_distance(v, p)
    on_mesh, loc = _default_eta(v, p, dist)
    if eta is None:
        eta = DEFAULT_ETA_EDGES * loc if on_mesh else 0.5 * float(dist.min())
    eta = float(eta)
    if not eta > 0:
        raise InputError("excision radius must be positive")
    if on_mesh and eta < 2.0 * loc:
        raise PoleOnMesh(f"pole lies on the mesh: excision radius {eta:.3g} < 2x local edge length {loc:.3g}")
    cut = dist <= eta
    excised = fsum((v.theta * v.face_areas)[cut])
    mu = total_mass(v)
    if excised > EXCISION_MAX_FRACTION * mu:
        raise ExcisionTooLarge(f"excision removes {excised / mu:.1%} of the mass")
    keep = ~cut
    if (dist[keep] < eta / 10).any():
        raise PoleOnMesh("a surviving face passes within eta/10 of the pole")
    part, old = submesh(v, keep)
    image = build(inversion_map(part.vertices, p), part.faces, part.multiplicity, tags=part.tags)

    src = mean_curvature(v)
    x = v.vertices[old] - p
    H = src.mean_curvature[old]
    perp = perpendicular_at_vertices(v, v.vertices - p)[old]
    r2 = np.einsum("ij,ij->i", x, x)
    transformed = r2[:, None] * reflection(x, H + 4.0 * perp / r2[:, None])
    recomputed = mean_curvature(image).mean_curvature
    return InversionResult(image, transformed, recomputed, excised, p, eta, old, v)


def theta_at_infinity(image: DiscreteVarifold, p, n_radii: int = 8, top: int = 3, backend=None):
    """Slope of ``mu~(B_rho)`` against ``pi rho^2`` over the largest admissible radii.

    For an image with boundary (the pole was excised) radii are capped at
    half the image's extent about ``p`` and at 0.9x the distance from ``p`` to
    the nearest boundary vertex. A closed image is bounded, so its radii run
    past the whole mesh and the slope is zero.
    """
    p = np.asarray(p, float)
    dist = np.linalg.norm(image.vertices - p, axis=1)
    bnd = image.tags == "boundary"
    if bnd.any():
        cap = min(0.5 * float(dist.max()), 0.9 * float(dist[bnd].min()))
        lo = max(3.0 * image.median_edge_length, float(dist.min()))
        if cap <= lo:
            lo = 0.25 * cap
    else:
        lo, cap = 1.1 * float(dist.max()), 4.0 * float(dist.max())
    radii = np.geomspace(lo, cap, n_radii)[-top:]
    m = ball_masses(image, p[None, :], radii, backend=backend)[0]
    A = np.stack([math.pi * radii ** 2, np.ones_like(radii)], 1)
    coef, *_ = np.linalg.lstsq(A, m, rcond=None)
    return float(coef[0]), radii, m


def cross_term_profile(image: DiscreteVarifold, p, radii, curv=None) -> np.ndarray:
    """``(2 / rho^2) * sum <(y - p)^perp, H~> dmu~`` over image vertices within ``rho`` of ``p``.

    On a complete image this decays as ``rho`` grows; on a truncated one it
    is a trend to report, not a limit to assert.
    """
    p = np.asarray(p, float)
    fld = curv if curv is not None else mean_curvature(image)
    ok = fld.validity_mask
    d = image.vertices - p
    perp = perpendicular_at_vertices(image, d)
    dens = np.where(ok, np.einsum("ij,ij->i", perp, np.nan_to_num(fld.mean_curvature)) * fld.vertex_area, 0.0)
    dist = np.linalg.norm(d, axis=1)
    return np.array([2.0 / (rho * rho) * fsum(dens[dist < rho]) for rho in np.asarray(radii, float)])


def verify_inversion_identities(v: DiscreteVarifold, p, eta: float | None = None, backend=None):
    """Evaluate both energy routes and both density routes for inversion in ``p``.

    ``lhs_energy`` integrates ``|H~|^2`` on the image mesh; ``rhs_energy``
    integrates ``|H + 4 x^perp/|x|^2|^2`` on the surviving source vertices.
    Returns ``(report, inversion_result)``.
    """
    p = np.asarray(p, float)
    res = invert(v, p, eta)
    img_e = willmore_energy(res.image)
    lhs = 4.0 * img_e.willmore

    src = mean_curvature(v)
    perp = perpendicular_at_vertices(v, v.vertices - p)
    r2 = np.einsum("ij,ij->i", v.vertices - p, v.vertices - p)
    alive = np.zeros(v.n_vertices, dtype=bool)
    alive[res.source_index] = True
    alive &= src.validity_mask & (r2 > 0)
    g = src.mean_curvature[alive] + 4.0 * perp[alive] / r2[alive, None]
    rhs = fsum(np.einsum("ij,ij->i", g, g) * src.vertex_area[alive])

    src_e = willmore_energy(v, src)
    prof = density_profile(v, p, with_remainder=False, field=src, backend=backend)
    th_inf, _, _ = theta_at_infinity(res.image, p, backend=backend)
    dimg = np.linalg.norm(res.image.vertices - p, axis=1)
    radii = np.geomspace(max(float(dimg.min()), res.image.median_edge_length) * 2, float(dimg.max()), 6)
    rep = InversionIdentityReport(
        lhs_energy=lhs,
        rhs_energy=rhs,
        energy_minus_density=4.0 * src_e.willmore - 16 * math.pi * prof.limit_estimate,
        theta_infinity=th_inf,
        theta_at_p=prof.limit_estimate,
        excised_mass=res.excised_mass,
        excision_radius=res.excision_radius,
        source_energy=4.0 * src_e.willmore,
        cross_term_radii=radii.tolist(),
        cross_term_values=cross_term_profile(res.image, p, radii).tolist(),
    )
    return rep, res
