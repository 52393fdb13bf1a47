"""Mean curvature as the discrete first variation of area, angle-defect Gauss
curvature, and the Willmore energy with its derived integrals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericFailure
from .mesh import DiscreteVarifold, corner_angles, cotan_laplacian, fsum, scatter_vertex


@dataclass(frozen=True)
class CurvatureField:
    mean_curvature: np.ndarray   # (N, n), NaN where masked
    gauss_curvature: np.ndarray  # (N,), NaN where masked
    vertex_area: np.ndarray      # (N,), multiplicity weighted
    validity_mask: np.ndarray    # (N,) bool

    @property
    def mean_curvature_norm(self):
        return np.linalg.norm(self.mean_curvature, axis=1)


@dataclass(frozen=True)
class EnergyBreakdown:
    willmore: float
    tracefree_sq_integral: float
    full_sff_sq_integral: float
    excluded_mass: float
    mean_sq_integral: float
    gauss_integral: float
    codim_heuristic: bool

    def as_dict(self):
        return {
            "willmore": self.willmore,
            "mean_curvature_sq_integral": self.mean_sq_integral,
            "gauss_integral": self.gauss_integral,
            "full_sff_sq_integral": self.full_sff_sq_integral,
            "tracefree_sq_integral": self.tracefree_sq_integral,
            "excluded_mass": self.excluded_mass,
            "codim_heuristic": self.codim_heuristic,
        }


def angle_defects(v: DiscreteVarifold) -> np.ndarray:
    """``2 pi - sum of incident corner angles`` at every vertex (geometric)."""
    ang = corner_angles(v.vertices, v.faces)
    return 2 * math.pi - scatter_vertex(v.faces, ang, v.n_vertices)


def mean_curvature_vectors(v: DiscreteVarifold) -> np.ndarray:
    """Raw ``(L x)_v / a_v`` for all vertices, no masking."""
    L = cotan_laplacian(v.vertices, v.faces, v.theta)
    return (L @ v.vertices) / v.vertex_areas[:, None]


def mean_curvature(v: DiscreteVarifold) -> CurvatureField:
    """Per-vertex mean curvature vector, Gauss curvature and vertex areas.

    ``H_v = (L x)_v / a_v`` with the multiplicity-weighted cotangent operator
    and mixed vertex areas; on the unit sphere ``H`` points to the centre with
    ``|H| = 2``. Junction and boundary vertices are masked (NaN).
    """
    valid = ~v.masked
    H = mean_curvature_vectors(v)
    bad = valid & ~np.isfinite(H).all(axis=1)
    if bad.any():
        raise NumericFailure(f"non-finite mean curvature at vertex {int(np.argmax(bad))}")
    H[~valid] = np.nan
    K = gauss_curvature(v)
    return CurvatureField(H, K, np.asarray(v.vertex_areas), np.asarray(valid))


def gauss_curvature(v: DiscreteVarifold) -> np.ndarray:
    """Angle defect over the (unweighted) vertex area; NaN on masked vertices."""
    K = angle_defects(v) / v.geometric_vertex_areas
    K[v.masked] = np.nan
    return K


def total_gauss_curvature(v: DiscreteVarifold) -> float:
    """``sum_v K_v a_v`` over valid vertices (multiplicity weighted)."""
    valid = ~v.masked
    K = angle_defects(v) / v.geometric_vertex_areas
    return fsum((K * v.vertex_areas)[valid])


def willmore_energy(v: DiscreteVarifold, field: CurvatureField | None = None) -> EnergyBreakdown:
    """``W = 1/4 sum_valid |H_v|^2 a_v`` and the second fundamental form integrals.

    ``int |A|^2 = int |H|^2 - 2 int K`` and ``int |A°|^2 = int |A|^2 - 1/2 int |H|^2``;
    these use the intrinsic K, so they are exact only in codimension one
    (``codim_heuristic`` is set when n > 3).
    """
    if field is None:
        field = mean_curvature(v)
    m = field.validity_mask
    a = field.vertex_area
    h2 = fsum((np.einsum("ij,ij->i", field.mean_curvature[m], field.mean_curvature[m])) * a[m])
    kint = fsum(field.gauss_curvature[m] * a[m])
    full = h2 - 2.0 * kint
    return EnergyBreakdown(
        willmore=0.25 * h2,
        tracefree_sq_integral=full - 0.5 * h2,
        full_sff_sq_integral=full,
        excluded_mass=fsum(a[~m]),
        mean_sq_integral=h2,
        gauss_integral=kint,
        codim_heuristic=v.ambient_dim > 3,
    )


def delta_tolerance(v: DiscreteVarifold, energy: EnergyBreakdown | None = None) -> float:
    """Smallness parameter ``sqrt(max(W - 4 pi, 0))``."""
    W = (energy or willmore_energy(v)).willmore
    return math.sqrt(max(W - 4 * math.pi, 0.0))


def first_variation_pair(v: DiscreteVarifold, field_fn, field_jac, quad_order: int = 2):
    """Both sides of the first-variation identity for a smooth vector field.

    Returns ``(sum_f theta_f int_f div_S X dA, -sum_v <H_v, X(x_v)> a_v)``.
    ``field_fn(P) -> (k, n)`` and ``field_jac(P) -> (k, n, n)`` (``J[i, j] =
    dX_i/dx_j``). The face integral uses the face tangent projector and a
    degree-2 rule on each triangle.
    """
    X, F = v.vertices, v.faces
    p = X[F]
    u = p[:, 1] - p[:, 0]
    w = p[:, 2] - p[:, 0]
    e1 = u / np.linalg.norm(u, axis=1)[:, None]
    w2 = w - np.einsum("ij,ij->i", w, e1)[:, None] * e1
    e2 = w2 / np.linalg.norm(w2, axis=1)[:, None]
    bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    lhs_faces = np.zeros(F.shape[0])
    for b in bary:
        q = np.einsum("k,fkn->fn", b, p)
        J = field_jac(q)
        div = np.einsum("fi,fij,fj->f", e1, J, e1) + np.einsum("fi,fij,fj->f", e2, J, e2)
        lhs_faces += div / 3.0
    lhs = fsum(lhs_faces * v.face_areas * v.theta)
    H = mean_curvature_vectors(v)
    rhs = -fsum(np.einsum("ij,ij->i", H, field_fn(X)) * v.vertex_areas)
    return lhs, rhs


# degree-4 symmetric rule on the reference triangle (barycentric, weights sum to 1)
_QA, _QB = 0.445948490915965, 0.091576213509771
_QWA, _QWB = 0.223381589678011, 0.109951743655322
QUAD_BARY = np.array([[_QA, _QA, 1 - 2 * _QA], [_QA, 1 - 2 * _QA, _QA], [1 - 2 * _QA, _QA, _QA],
                      [_QB, _QB, 1 - 2 * _QB], [_QB, 1 - 2 * _QB, _QB], [1 - 2 * _QB, _QB, _QB]])
QUAD_W = np.array([_QWA] * 3 + [_QWB] * 3)


def face_normal_projectors(v: DiscreteVarifold):
    """Orthonormal tangent frame ``(e1, e2)`` of every face, shape (F, n) each."""
    _, e1, e2, *_ = v.face_frames
    return e1, e2


def quadrature_samples(v: DiscreteVarifold, field: CurvatureField | None = None):
    """Points, measure weights and interpolated H at the face quadrature nodes.

    Masked vertices contribute the mean H of the valid vertices of the same
    face (zero if a face has none).
    """
    if field is None:
        field = mean_curvature(v)
    F = v.faces
    Hf = field.mean_curvature[F]  # (F, 3, n)
    ok = field.validity_mask[F]
    cnt = ok.sum(axis=1)
    fill = np.where(ok[..., None], Hf, 0.0).sum(axis=1) / np.maximum(cnt, 1)[:, None]
    Hf = np.where(ok[..., None], Hf, fill[:, None, :])
    pts = np.einsum("qk,fkn->fqn", QUAD_BARY, v.vertices[F])
    Hq = np.einsum("qk,fkn->fqn", QUAD_BARY, Hf)
    w = (v.face_areas * v.theta)[:, None] * QUAD_W[None, :]
    return pts, w, Hq


def perpendicular_part(v: DiscreteVarifold, vec):
    """Remove the face-plane component from per-face vectors ``(F, Q, n)``."""
    e1, e2 = face_normal_projectors(v)
    c1 = np.einsum("fqn,fn->fq", vec, e1)
    c2 = np.einsum("fqn,fn->fq", vec, e2)
    return vec - c1[..., None] * e1[:, None, :] - c2[..., None] * e2[:, None, :]
