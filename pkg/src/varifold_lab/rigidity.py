"""Comparison round sphere for a near-minimizer of the Willmore energy.

Pipeline (all stages are pure functions):

1. scale to mass 4 pi, find the diameter pair, move one endpoint to the origin;
2. invert in the origin (the far endpoint goes to the bulk of a nearly flat image);
3. fit an orthogonal 2-plane ``x = P y + v`` to the image;
4. invert the plane back: a sphere through the origin;
5. pair every source vertex with a point of that sphere (project its image
   onto the plane, invert back) and measure the deviation in the unit frame.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .curvature import delta_tolerance, total_gauss_curvature, willmore_energy
from .errors import (CoverageGap, DegenerateFit, HypothesisViolated, InputError, NotClosed,
                     PlaneThroughPole)
from .mesh import (DiscreteVarifold, cotan_laplacian, diameter, fsum, mixed_face_areas,
                   normalize_mass, scatter_vertex, triangle_geometry, with_vertices)
from .moebius import InversionResult, invert

SINGULAR_TOL = 1e-8
PLANE_POLE_TOL = 1e-10
COVERAGE_ABORT = 0.95
COVERAGE_TARGET = 0.99


@dataclass
class PlaneFit:
    P: np.ndarray        # (n, 2), orthonormal columns
    offset: np.ndarray   # v
    foot: np.ndarray     # v', closest point of the plane to the pole
    residual_sup: float
    singular_values: np.ndarray
    pole: np.ndarray


@dataclass
class ComparisonSphere:
    center: np.ndarray
    radius: float
    basis: np.ndarray    # (n, 3) orthonormal: plane directions + foot direction


@dataclass
class RigidityReport:
    delta: float
    sphere: ComparisonSphere | None = None
    coverage: float = float("nan")
    sup_deviation: float = float("nan")
    conformal_log_range: tuple = (float("nan"), float("nan"))
    laplace_defect: float = float("nan")
    w22_deviation: float = float("nan")
    w22_parts: dict = field(default_factory=dict)
    empirical_constants: dict = field(default_factory=dict)
    sphere_points: np.ndarray | None = None   # q, one per source vertex (original frame)
    surface_points: np.ndarray | None = None  # p, one per source vertex (original frame)
    residual_sup: float = float("nan")
    pole_vertex: int = -1
    far_vertex: int = -1
    image_gauss_integral: float = float("nan")  # interior of the truncated inverted image

    @property
    def max_abs_log_conformal(self):
        return max(abs(self.conformal_log_range[0]), abs(self.conformal_log_range[1]))

    def as_dict(self, with_correspondence=False):
        d = {
            "delta": self.delta,
            "sphere": None if self.sphere is None else {"center": self.sphere.center.tolist(),
                                                        "radius": self.sphere.radius},
            "coverage": self.coverage,
            "sup_deviation": self.sup_deviation,
            "conformal_log_range": list(self.conformal_log_range),
            "laplace_defect": self.laplace_defect,
            "w22_deviation": self.w22_deviation,
            "w22_parts": self.w22_parts,
            "empirical_constants": self.empirical_constants,
            "plane_residual_sup": self.residual_sup,
            "pole_vertex": self.pole_vertex,
            "far_vertex": self.far_vertex,
            "image_gauss_integral": self.image_gauss_integral,
        }
        if with_correspondence and self.sphere_points is not None:
            d["correspondence"] = {"q": self.sphere_points.tolist(), "p": self.surface_points.tolist()}
        return d


# ---------------------------------------------------------------- stage 1

def choose_inversion_point(v: DiscreteVarifold):
    """Diameter pair ``(i, j)`` and the mesh translated so vertex ``i`` is the origin.

    Returns ``(translated_mesh, far_vertex j, pole_vertex i)``; inversion in
    the origin sends vertex ``i`` to infinity.
    """
    if not v.is_closed:
        raise NotClosed("the comparison-sphere construction needs a closed mesh")
    _, (i, j) = diameter(v)
    moved = with_vertices(v, v.vertices - v.vertices[i])
    return moved, j, i


# ---------------------------------------------------------------- stage 3

def _polar(A):
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return U @ Vt, s


def fit_plane(inverted: InversionResult) -> PlaneFit:
    """Orthogonal 2-plane approximating the inverted mesh.

    The linear part averages per-face orthonormal bases, each rotated within
    its plane to best match a seed face, with weights ``area / (1 + |y|^2)^2``
    (``y`` = face centroid relative to the pole); the nearest matrix with
    orthonormal columns is taken by polar decomposition. The offset is the
    vertex centroid under the same weights.
    """
    img = inverted.image
    pole = np.asarray(inverted.center, float)
    Y = img.vertices - pole
    _, e1, e2, *_ = img.face_frames
    B = np.stack([e1, e2], axis=2)  # (F, n, 2)
    yc = img.face_centroids - pole
    w = img.face_areas * img.theta / (1.0 + np.einsum("ij,ij->i", yc, yc)) ** 2
    seed = int(np.argmax(w))
    S = B[seed]
    # rotate each face basis in-plane (and flip orientation if needed) towards the seed
    M = np.einsum("fni,nj->fij", B, S)  # B_f^T S
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    A = np.einsum("f,fni,fij->nj", w, B, R) / fsum(w)
    P, s = _polar(A)
    if s.min() < SINGULAR_TOL:
        raise DegenerateFit(f"averaged tangent map has singular values {s}")
    wv = img.vertex_areas / (1.0 + np.einsum("ij,ij->i", Y, Y)) ** 2
    off = (wv[:, None] * Y).sum(axis=0) / fsum(wv)
    foot = off - P @ (P.T @ off)
    dv = Y - off
    perp = dv - (dv @ P) @ P.T
    resid = float(np.max(np.linalg.norm(perp, axis=1) / (1.0 + np.einsum("ij,ij->i", dv, dv))))
    return PlaneFit(P, off, foot, resid, s, pole)


# ---------------------------------------------------------------- stage 4

def comparison_sphere(fit: PlaneFit) -> ComparisonSphere:
    """Image of the fitted plane under inversion in the pole."""
    nv = float(np.linalg.norm(fit.foot))
    if nv <= PLANE_POLE_TOL:
        raise PlaneThroughPole(f"fitted plane passes within {nv:.3g} of the pole")
    center = fit.pole + fit.foot / (2.0 * nv * nv)
    basis = np.column_stack([fit.P, fit.foot / nv])
    return ComparisonSphere(center, 1.0 / (2.0 * nv), basis)


# ---------------------------------------------------------------- stage 5

def spherical_coverage(points3, center3) -> float:
    """Fraction of the sphere of directions covered by the radial projection
    of the convex hull of ``points3`` seen from ``center3``."""
    try:
        hull = ConvexHull(points3)
    except QhullError:
        return 0.0
    facets = points3[hull.simplices] - center3
    inside = hull.equations[:, -1] + hull.equations[:, :3] @ center3 <= 0
    a, b, c = facets[:, 0], facets[:, 1], facets[:, 2]
    la, lb, lc = (np.linalg.norm(x, axis=1) for x in (a, b, c))
    trip = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
    den = la * lb * lc + np.einsum("ij,ij->i", a, b) * lc + np.einsum("ij,ij->i", a, c) * lb \
        + np.einsum("ij,ij->i", b, c) * la
    omega = 2.0 * np.arctan2(trip, den)
    return float(fsum(omega[inside]) / (4 * math.pi))


def build_correspondence(v: DiscreteVarifold, inverted: InversionResult, fit: PlaneFit,
                         sphere: ComparisonSphere):
    """Sphere point ``q`` for every vertex of ``v`` (same frame as ``v``).

    Each non-pole vertex is inverted, projected orthogonally onto the plane
    and inverted back; the pole itself is paired with the pole. Returns
    ``(q, coverage)``.

    Raises
    ------
    CoverageGap
        The q-points cover less than 95% of the sphere.
    """
    pole = fit.pole
    d = v.vertices - pole
    r2 = np.einsum("ij,ij->i", d, d)
    at_pole = r2 == 0
    q = np.tile(pole, (v.n_vertices, 1))
    y = d[~at_pole] / r2[~at_pole, None]
    a = fit.foot + (y @ fit.P) @ fit.P.T
    q[~at_pole] = pole + a / np.einsum("ij,ij->i", a, a)[:, None]
    local = (q - sphere.center) @ sphere.basis
    cov = spherical_coverage(local, np.zeros(3))
    if cov < COVERAGE_ABORT:
        raise CoverageGap(f"sphere coverage {cov:.3f} below {COVERAGE_ABORT}")
    return q, cov


# ---------------------------------------------------------------- metrics

def _face_grad_sq(X, F, U):
    """Per-face integral of |grad U|^2 for a piecewise-linear map on the mesh X."""
    _, cot = triangle_geometry(X, F)
    out = np.zeros(F.shape[0])
    for i in range(3):
        du = U[F[:, (i + 1) % 3]] - U[F[:, (i + 2) % 3]]
        out += 0.5 * cot[:, i] * np.einsum("ij,ij->i", du, du)
    return 0.5 * out


def rigidity_metrics(v: DiscreteVarifold, q: np.ndarray, sphere: ComparisonSphere, delta: float):
    """Deviation of the surface from the comparison sphere in the unit frame.

    Sphere points are mapped to the unit sphere by ``s = (q - c)/r`` and the
    surface by ``x - c`` (the surface is not rescaled). All integrals use the
    sphere-side triangulation with the source connectivity.
    """
    c, r = sphere.center, sphere.radius
    S = (q - c) / r
    Pt = v.vertices - c
    Ufield = Pt - S
    F = v.faces
    sup_dev = float(np.max(np.linalg.norm(Ufield, axis=1)))

    dbl_s, _ = triangle_geometry(S, F)
    area_p = v.face_areas
    with np.errstate(divide="ignore", invalid="ignore"):
        logc = 0.5 * np.log(area_p / (0.5 * dbl_s))
    if not np.isfinite(logc).all():
        raise DegenerateFit("sphere-side triangulation has degenerate faces")

    a_s = scatter_vertex(F, mixed_face_areas(S, F), v.n_vertices)
    L = cotan_laplacian(S, F)
    lap = (L @ Ufield) / a_s[:, None]
    defect_v = lap + 2.0 * Ufield
    laplace_defect = fsum(np.einsum("ij,ij->i", defect_v, defect_v) * a_s)
    l2 = fsum(np.einsum("ij,ij->i", Ufield, Ufield) * a_s)
    grad = fsum(_face_grad_sq(S, F, Ufield))
    lap2 = fsum(np.einsum("ij,ij->i", lap, lap) * a_s)
    w22 = l2 + grad + lap2

    metrics = {
        "sup_deviation": sup_dev,
        "conformal_log_range": (float(logc.min()), float(logc.max())),
        "laplace_defect": laplace_defect,
        "w22_deviation": w22,
        "w22_parts": {"value_l2_sq": l2, "gradient_l2_sq": grad, "laplacian_l2_sq": lap2},
    }
    mx = float(max(abs(logc.min()), abs(logc.max())))
    if delta > 0:
        emp = {
            "sup_deviation/delta": sup_dev / delta,
            "max_abs_log_conformal/delta": mx / delta,
            "sqrt_laplace_defect/delta": math.sqrt(laplace_defect) / delta,
            "laplace_defect/delta^2": laplace_defect / delta ** 2,
            "sqrt_w22/delta": math.sqrt(w22) / delta,
        }
    else:
        warnings.warn("energy does not exceed 4 pi at this resolution; ratios to delta are undefined "
                      "(refine the mesh)", RuntimeWarning, stacklevel=2)
        emp = {k: None for k in ("sup_deviation/delta", "max_abs_log_conformal/delta",
                                 "sqrt_laplace_defect/delta", "laplace_defect/delta^2", "sqrt_w22/delta")}
    metrics["empirical_constants"] = emp
    return metrics


# ---------------------------------------------------------------- driver

def hypothesis_gate(v: DiscreteVarifold, delta: float):
    """Reject inputs the construction does not apply to.

    Junction vertices mean a point of density >= 3/2, which forces
    ``W >= 6 pi``; ``delta^2 >= 2 pi`` is the same energy level directly.
    """
    nj = int((v.tags == "junction").sum())
    if nj:
        raise HypothesisViolated(f"{nj} junction vertices: density-3/2 branch, outside the near-sphere regime")
    if delta * delta >= 2 * math.pi:
        raise HypothesisViolated(f"delta^2 = {delta * delta:.4g} >= 2 pi")


def rigidity_pipeline(v: DiscreteVarifold, eta: float | None = None, gate: bool = True) -> RigidityReport:
    """Run every stage and return the populated report.

    Raises
    ------
    HypothesisViolated, PlaneThroughPole, CoverageGap
        Out-of-regime input (expected for extremal surfaces).
    """
    if not v.is_closed:
        raise NotClosed("the comparison-sphere construction needs a closed mesh")
    vn = normalize_mass(v, 4 * math.pi)
    e = willmore_energy(vn)
    delta = delta_tolerance(vn, e)
    if gate:
        hypothesis_gate(vn, delta)
    moved, far, pole = choose_inversion_point(vn)
    origin = np.zeros(v.ambient_dim)
    inv = invert(moved, origin, eta)
    fit = fit_plane(inv)
    sph = comparison_sphere(fit)
    q, cov = build_correspondence(moved, inv, fit, sph)
    m = rigidity_metrics(moved, q, sph, delta)
    # report in the frame of the normalized input
    shift = vn.vertices[pole]
    sph_out = ComparisonSphere(sph.center + shift, sph.radius, sph.basis)
    return RigidityReport(delta=delta, sphere=sph_out, coverage=cov, sup_deviation=m["sup_deviation"],
                          conformal_log_range=m["conformal_log_range"], laplace_defect=m["laplace_defect"],
                          w22_deviation=m["w22_deviation"], w22_parts=m["w22_parts"],
                          empirical_constants=m["empirical_constants"], sphere_points=q + shift,
                          surface_points=moved.vertices + shift, residual_sup=fit.residual_sup,
                          pole_vertex=pole, far_vertex=far,
                          image_gauss_integral=total_gauss_curvature(inv.image))


def perturbation_sweep(v: DiscreteVarifold, eps_values, l: int = 2, m: int = 0, eta=None):
    """Re-perturb ``v`` radially by ``eps * Y_lm`` along its own vertex directions
    and run the pipeline for every amplitude."""
    from .mesh import mass_centroid
    from .zoo import radial_perturbation

    c = mass_centroid(v)
    out = []
    for eps in eps_values:
        X = radial_perturbation(v.vertices, float(eps), l, m, center=c)
        out.append((float(eps), rigidity_pipeline(with_vertices(v, X), eta)))
    return out
