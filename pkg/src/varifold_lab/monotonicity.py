"""Density ratios, the monotone density quantity, and the lower bounds it
implies (energy vs. density, diameter vs. mass)."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .curvature import (CurvatureField, mean_curvature, perpendicular_part, quadrature_samples,
                        willmore_energy)
from .errors import HypothesisViolated, InputError, LiYauViolation, NotClosed, RadiusBelowResolution
from .mesh import DiscreteVarifold, ball_masses, diameter, fsum, total_mass

LIYAU_ABORT_FRACTION = 0.05


@dataclass
class DensityProfile:
    center: np.ndarray
    radii: np.ndarray
    ratios: np.ndarray
    limit_estimate: float
    remainder: np.ndarray | None = None

    def rows(self):
        rem = self.remainder if self.remainder is not None else [float("nan")] * len(self.radii)
        return [(float(r), float(t), float(q)) for r, t, q in zip(self.radii, self.ratios, rem)]


@dataclass
class DiameterCheck:
    lower_ok: bool
    lower_bound: float
    diameter: float
    upper_constant: float
    pair: tuple = (0, 0)


@dataclass
class MonotonicityReport:
    willmore: float
    max_density_estimate: float
    li_yau_slack: float
    argmax_vertex: int
    diameter_check: DiameterCheck | None = None
    notes: list = field(default_factory=list)

    def as_dict(self):
        d = {"willmore": self.willmore, "max_density_estimate": self.max_density_estimate,
             "li_yau_slack": self.li_yau_slack, "argmax_vertex": self.argmax_vertex, "notes": self.notes}
        if self.diameter_check is not None:
            d["diameter_check"] = vars(self.diameter_check).copy()
            d["diameter_check"]["pair"] = list(self.diameter_check.pair)
        return d


def default_radii(v: DiscreteVarifold, count: int = 8, step: float = 1.2) -> np.ndarray:
    """Three close radii from 2.5x the median edge length (used for the r -> 0
    fit), then log-spaced out to half the diameter."""
    lo = 2.5 * v.median_edge_length
    hi = 0.5 * diameter(v)[0]
    head = lo * step ** np.arange(min(3, count))
    if count <= 3:
        return head
    top = max(hi, head[-1] * step ** (count - 2))
    return np.concatenate([head, np.geomspace(head[-1] * step, top, count - 3)])


def _fit_matrix(r):
    # ratio(r) = a + c r^2 (a smooth surface has no linear term), weights ~ 1/r
    sw = np.sqrt(1.0 / r)
    return np.stack([np.ones_like(r), r * r], 1) * sw[:, None], sw


def extrapolate_to_zero(radii, values, k: int = 3) -> float:
    """Weighted least-squares fit ``a + c r^2`` over the ``k`` smallest radii
    (weights ~ 1/r); returns ``a``."""
    r = np.asarray(radii, float)[:k]
    y = np.asarray(values, float)[:k]
    A, sw = _fit_matrix(r)
    coef, *_ = np.linalg.lstsq(A, y * sw, rcond=None)
    return float(coef[0])


def _check_radii(radii):
    radii = np.asarray(radii, float)
    if radii.ndim != 1 or radii.size == 0 or (radii <= 0).any() or (np.diff(radii) <= 0).any():
        raise InputError("radii must be positive and strictly increasing")
    return radii


def _remainder_integrand(v, x, field):
    pts, w, Hq = quadrature_samples(v, field)
    d = pts - x
    r2 = np.einsum("fqn,fqn->fq", d, d)
    perp = perpendicular_part(v, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(r2[..., None] > 0, perp / r2[..., None], 0.0)
    g = Hq / 4.0 + y
    return np.sqrt(r2), w, np.einsum("fqn,fqn->fq", g, g), Hq, d


def density_profile(v: DiscreteVarifold, x, radii=None, with_remainder: bool = True,
                    field: CurvatureField | None = None, backend=None) -> DensityProfile:
    """Density ratios ``mu(B(x, r)) / (pi r^2)`` and their r -> 0 limit.

    The remainder column is ``int_{B_r} |H/4 + (y - x)^perp / |y - x|^2|^2``
    with the perpendicular taken against each face plane.
    """
    x = np.asarray(x, float)
    radii = default_radii(v) if radii is None else _check_radii(radii)
    near = int(np.argmin(np.linalg.norm(v.vertices - x, axis=1)))
    if radii[0] < 2.0 * v.local_edge_length[near]:
        warnings.warn(RadiusBelowResolution(
            f"smallest radius {radii[0]:.3g} < 2x local edge length {v.local_edge_length[near]:.3g}"))
    mass = ball_masses(v, x[None, :], radii, backend=backend)[0]
    ratios = mass / (math.pi * radii ** 2)
    rem = None
    if with_remainder:
        dist, w, g2, *_ = _remainder_integrand(v, x, field)
        rem = np.array([fsum((w * g2)[dist < r]) for r in radii])
    lim = max(extrapolate_to_zero(radii, ratios), 0.0)
    return DensityProfile(x, radii, ratios, lim, rem)


def vertex_density_limits(v: DiscreteVarifold, radii=None, vertices=None, backend=None) -> np.ndarray:
    """Extrapolated density at many vertices using the three smallest radii."""
    radii = (default_radii(v) if radii is None else _check_radii(radii))[:3]
    idx = np.arange(v.n_vertices) if vertices is None else np.asarray(vertices)
    m = ball_masses(v, v.vertices[idx], radii, backend=backend)
    ratios = m / (math.pi * radii[None, :] ** 2)
    A, sw = _fit_matrix(radii)
    coef = np.linalg.lstsq(A, (ratios * sw[None, :]).T, rcond=None)[0]
    return np.maximum(coef[0], 0.0)


def density_at_point_via_energy(v: DiscreteVarifold, p, field: CurvatureField | None = None) -> float:
    """Density from the energy identity ``W/(4 pi) - (1/pi) int |H/4 + x^perp/|x|^2|^2``."""
    if not v.is_closed:
        raise NotClosed("the energy identity for the density needs a closed mesh")
    field = field or mean_curvature(v)
    W = willmore_energy(v, field).willmore
    _, w, g2, *_ = _remainder_integrand(v, np.asarray(p, float), field)
    return W / (4 * math.pi) - fsum(w * g2) / math.pi


def monotone_quantity(v: DiscreteVarifold, x, radii, field: CurvatureField | None = None, backend=None):
    """``mu(B_r)/(pi r^2) + (1/16 pi) int_{B_r} |H|^2 + (1/(2 pi r^2)) int_{B_r} <y - x, H>``.

    Nondecreasing in r for a smooth surface; constant on a round sphere.
    """
    x = np.asarray(x, float)
    radii = _check_radii(radii)
    mass = ball_masses(v, x[None, :], radii, backend=backend)[0]
    dist, w, _, Hq, d = _remainder_integrand(v, x, field)
    h2 = np.einsum("fqn,fqn->fq", Hq, Hq) * w
    cross = np.einsum("fqn,fqn->fq", d, Hq) * w
    out = []
    for r, m in zip(radii, mass):
        inside = dist < r
        out.append(m / (math.pi * r * r) + fsum(h2[inside]) / (16 * math.pi)
                   + fsum(cross[inside]) / (2 * math.pi * r * r))
    return np.array(out)


def diameter_bounds_check(v: DiscreteVarifold, rtol: float = 0.01, energy=None) -> DiameterCheck:
    """Lower diameter bound ``diam >= (1/7) sqrt(mu / 4 pi)`` and ``diam / sqrt(mu)``.

    Only meaningful while ``int |H|^2 < 32 pi``; since the discrete energy of
    a surface sitting exactly on that threshold is slightly below it, the
    check refuses anything within ``rtol`` (relative) of the threshold.
    """
    e = energy or willmore_energy(v)
    h2 = 4.0 * e.willmore
    if h2 >= 32 * math.pi * (1.0 - rtol):
        raise HypothesisViolated(f"int |H|^2 = {h2:.6g} is not below 32 pi = {32 * math.pi:.6g} "
                                 f"(relative tolerance {rtol:g})")
    mu = total_mass(v)
    diam, pair = diameter(v)
    lb = math.sqrt(mu / (4 * math.pi)) / 7.0
    return DiameterCheck(bool(diam >= lb), lb, diam, diam / math.sqrt(mu), pair)


def li_yau_check(v: DiscreteVarifold, radii=None, backend=None) -> MonotonicityReport:
    """Compare W with ``4 pi * max_x density(x)`` over vertex-centred profiles.

    Raises
    ------
    NotClosed
        The mesh has boundary.
    LiYauViolation
        Slack below -5% of W: the discretization is inconsistent.
    """
    if (v.tags == "boundary").any():
        raise NotClosed("energy/density comparison needs a closed mesh")
    e = willmore_energy(v)
    lim = vertex_density_limits(v, radii, backend=backend)
    k = int(np.argmax(lim))
    mx = float(lim[k])
    slack = e.willmore - 4 * math.pi * mx
    notes = []
    try:
        dchk = diameter_bounds_check(v, energy=e)
    except HypothesisViolated as exc:
        dchk = None
        notes.append(f"diameter check skipped: {exc}")
    if slack < -LIYAU_ABORT_FRACTION * e.willmore:
        raise LiYauViolation(f"W = {e.willmore:.6g} < 4 pi * {mx:.4f} beyond tolerance (vertex {k})")
    return MonotonicityReport(e.willmore, mx, slack, k, dchk, notes)
