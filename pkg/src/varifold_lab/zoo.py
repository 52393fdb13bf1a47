"""Deterministic surface generators.

Kinds: ``icosphere``, ``perturbed_sphere``, ``ellipsoid``, ``torus``,
``multiplicity_sphere``, ``y_prism`` and ``double_bubble``. The last two are
the three-sheet examples: a prism over the 120-degree Y cone, and its image
under inversion in a point off the prism (two 3/4 spheres glued along a
circle to a flat disk).

The junction examples are triangulated in the *inverted* picture, where the
surface is compact, and mapped back; see :func:`_bubble_image`.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import lpmv

from .errors import InvalidSpec, NoReference
from .mesh import DiscreteVarifold, build, submesh

KINDS = ("icosphere", "perturbed_sphere", "ellipsoid", "torus", "y_prism", "double_bubble",
         "multiplicity_sphere")

DEFAULTS = {
    "icosphere": {"subdiv": 4, "radius": 1.0},
    "perturbed_sphere": {"subdiv": 5, "l": 2, "m": 0, "eps": 0.05},
    "ellipsoid": {"subdiv": 4, "axes": (1.0, 1.0, 2.0)},
    "torus": {"R": math.sqrt(2.0), "r": 1.0, "n_tube": 64},
    "multiplicity_sphere": {"subdiv": 4, "radius": 1.0, "theta": 2},
    "y_prism": {"half_length": 20.0, "truncation": 20.0, "pole_distance": 1.0, "resolution": 0.015},
    "double_bubble": {"half_length": None, "truncation": None, "pole_distance": 1.0, "resolution": 0.015},
}


@dataclass
class ZooSpec:
    """Generator recipe: a kind, its parameters and an optional jitter seed."""

    kind: str
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def resolved(self) -> dict:
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.params) - set(DEFAULTS[self.kind]) - {"jitter"}
        if unknown:
            raise InvalidSpec(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        out = dict(DEFAULTS[self.kind])
        out.update(self.params)
        return out

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ZooSpec":
        d = json.loads(text)
        return cls(d["kind"], d.get("params", {}), d.get("seed"))


# ---------------------------------------------------------------- spheres

_T = (1.0 + 5.0 ** 0.5) / 2.0
_ICO_V = np.array([(-1, _T, 0), (1, _T, 0), (-1, -_T, 0), (1, -_T, 0), (0, -1, _T), (0, 1, _T),
                   (0, -1, -_T), (0, 1, -_T), (_T, 0, -1), (_T, 0, 1), (-_T, 0, -1), (-_T, 0, 1)], float)
_ICO_F = np.array([(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
                   (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
                   (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)], np.int64)


def icosphere_arrays(subdiv: int):
    """Unit icosphere: ``10 * 4**subdiv + 2`` vertices, all on the sphere."""
    if subdiv < 0 or subdiv > 8:
        raise InvalidSpec("subdiv must be in [0, 8]")
    V = _ICO_V / np.linalg.norm(_ICO_V, axis=1)[:, None]
    F = _ICO_F.copy()
    for _ in range(subdiv):
        e = np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), axis=1)
        uniq, inv = np.unique(e, axis=0, return_inverse=True)
        inv = inv.ravel()
        mid = V[uniq[:, 0]] + V[uniq[:, 1]]
        mid /= np.linalg.norm(mid, axis=1)[:, None]
        nf = F.shape[0]
        ab = inv[:nf] + len(V)
        bc = inv[nf:2 * nf] + len(V)
        ca = inv[2 * nf:] + len(V)
        a, b, c = F[:, 0], F[:, 1], F[:, 2]
        F = np.concatenate([np.stack([a, ab, ca], 1), np.stack([b, bc, ab], 1),
                            np.stack([c, ca, bc], 1), np.stack([ab, bc, ca], 1)])
        V = np.vstack([V, mid])
    return V, F


def real_sph_harm(l: int, m: int, dirs: np.ndarray) -> np.ndarray:
    """Real orthonormal spherical harmonic evaluated at unit vectors."""
    if l < 0 or abs(m) > l:
        raise InvalidSpec(f"need |m| <= l, got l={l}, m={m}")
    z = np.clip(dirs[:, 2], -1.0, 1.0)
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    am = abs(m)
    norm = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - am) / math.factorial(l + am))
    P = lpmv(am, l, z)
    if m == 0:
        return norm * P
    ang = np.cos(am * phi) if m > 0 else np.sin(am * phi)
    return math.sqrt(2.0) * norm * P * ang


def radial_perturbation(X, eps, l=2, m=0, center=None):
    """Move points radially about ``center``: ``x -> c + R_mean (1 + eps Y_lm(u)) u``."""
    c = np.zeros(X.shape[1]) if center is None else np.asarray(center, float)
    d = X - c
    rad = np.linalg.norm(d, axis=1)
    u = d / rad[:, None]
    u3 = u[:, :3] / np.linalg.norm(u[:, :3], axis=1)[:, None]
    scale = float(rad.mean()) * (1.0 + eps * real_sph_harm(l, m, u3))
    return c + scale[:, None] * u


# ---------------------------------------------------------------- torus

def torus_arrays(R: float, r: float, n_tube: int):
    if not (R > r > 0):
        raise InvalidSpec("torus needs R > r > 0")
    if n_tube < 8:
        raise InvalidSpec("n_tube must be >= 8")
    nv = int(n_tube)
    nu = max(8, int(round(nv * (R + r) / r)))
    u = 2 * math.pi * np.arange(nu) / nu
    v = 2 * math.pi * np.arange(nv) / nv
    U, Vv = np.meshgrid(u, v, indexing="ij")
    X = np.stack([(R + r * np.cos(Vv)) * np.cos(U), (R + r * np.cos(Vv)) * np.sin(U), r * np.sin(Vv)], -1)
    idx = np.arange(nu * nv).reshape(nu, nv)
    a = idx
    b = np.roll(idx, -1, axis=0)
    c = np.roll(np.roll(idx, -1, axis=0), -1, axis=1)
    d = np.roll(idx, -1, axis=1)
    F = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
    return X.reshape(-1, 3), F


def torus_willmore_closed_form(R: float, r: float) -> float:
    """Willmore energy of the round torus: ``pi^2 c^2 / sqrt(c^2 - 1)``, ``c = R/r``."""
    c = R / r
    return math.pi ** 2 * c * c / math.sqrt(c * c - 1.0)


# ---------------------------------------------------------------- junction surfaces

def _stitch(inner, inner_ang, outer, outer_ang):
    """Triangulate the band between two closed rings by merging angles."""
    tris = []
    if len(inner) == 1:
        for j in range(len(outer)):
            tris.append((inner[0], outer[j], outer[(j + 1) % len(outer)]))
        return tris
    ai = list(inner_ang) + [inner_ang[0] + 2 * math.pi]
    ao = list(outer_ang) + [outer_ang[0] + 2 * math.pi]
    i = j = 0
    ni, no = len(inner), len(outer)
    while i < ni or j < no:
        adv_outer = j < no and (i >= ni or ao[j + 1] <= ai[i + 1])
        if adv_outer:
            tris.append((inner[i % ni], outer[j % no], outer[(j + 1) % no]))
            j += 1
        else:
            tris.append((inner[i % ni], outer[j % no], inner[(i + 1) % ni]))
            i += 1
    return tris


def _polar_patch(point_at, n_rings, ring_count, junction_ids, junction_ang, X, F):
    """Rings ``1..n_rings-1`` plus an apex, stitched onto the shared junction ring."""
    apex = len(X)
    X.append(point_at(0, 0.0))
    prev, prev_ang = [apex], [0.0]
    for i in range(1, n_rings):
        k = ring_count(i)
        ang = 2 * math.pi * np.arange(k) / k
        ids = list(range(len(X), len(X) + k))
        X.extend(point_at(i, a) for a in ang)
        F.extend(_stitch(prev, prev_ang, ids, list(ang)))
        prev, prev_ang = ids, list(ang)
    F.extend(_stitch(prev, prev_ang, junction_ids, junction_ang))


def _bubble_image(pole_distance: float, resolution: float):
    """Closed three-sheet surface: flat disk plus two 3/4 spheres on a circle.

    This is the inversion of the Y prism (line = z-axis, sheets along
    ``(1,0,0)`` and ``(-1/2, +-sqrt(3)/2, 0)``) in the pole
    ``p = (-d, 0, 0)``. The junction circle passes through ``p``, which is
    vertex ``M/2`` of the junction ring.
    """
    d = float(pole_distance)
    h = float(resolution)
    if not (d > 0 and h > 0):
        raise InvalidSpec("pole_distance and resolution must be positive")
    a = 1.0 / (2.0 * d)
    if h > a / 4:
        raise InvalidSpec(f"resolution must be <= {a / 4:g} for pole_distance {d:g}")
    c = np.array([a - d, 0.0, 0.0])
    M = 2 * max(6, int(round(math.pi * a / h)))
    X: list = []
    F: list = []
    jang = list(2 * math.pi * np.arange(M) / M)
    jid = list(range(M))
    for t in jang:
        X.append(c + a * np.array([math.cos(t), 0.0, math.sin(t)]))
    X[M // 2] = np.array([-d, 0.0, 0.0])

    # disk in the plane y = 0
    nd = max(2, int(round(a / h)))

    def disk_pt(i, t):
        rho = a * i / nd
        return c + rho * np.array([math.cos(t), 0.0, math.sin(t)])

    _polar_patch(disk_pt, nd, lambda i: max(6, int(round(2 * math.pi * a * i / nd / h))), jid, jang, X, F)

    # caps: centre c + s a/sqrt(3) e_y, radius 2a/sqrt(3), polar angle 0..120 deg
    Rs = 2 * a / math.sqrt(3.0)
    amax = 2 * math.pi / 3
    nc = max(2, int(round(Rs * amax / h)))
    for s in (1.0, -1.0):
        o = c + np.array([0.0, s * a / math.sqrt(3.0), 0.0])

        def cap_pt(i, t, o=o, s=s):
            al = amax * i / nc
            return o + Rs * np.array([math.sin(al) * math.cos(t), s * math.cos(al), math.sin(al) * math.sin(t)])

        _polar_patch(cap_pt, nc, lambda i: max(6, int(round(2 * math.pi * Rs * math.sin(amax * i / nc) / h))),
                     jid, jang, X, F)
    return np.array(X), np.array(F, dtype=np.int64), M // 2


def _truncated_prism(params):
    from .moebius import inversion_map

    d = float(params["pole_distance"])
    Y, F, pole_idx = _bubble_image(d, float(params["resolution"]))
    p = np.array([-d, 0.0, 0.0])
    T = params["truncation"]
    L = params["half_length"]
    if T is None:
        raise InvalidSpec("y_prism needs a finite truncation radius")
    T = float(T)
    L = T if L is None else float(L)
    if not (T > 0 and L > 0):
        raise InvalidSpec("truncation and half_length must be positive")
    ok = np.ones(len(Y), dtype=bool)
    ok[pole_idx] = False
    src = np.full_like(Y, np.inf)
    src[ok] = inversion_map(Y[ok], p)
    keep_v = ok & (np.abs(src[:, 2]) <= L) & (np.hypot(src[:, 0], src[:, 1]) <= T)
    keep_f = keep_v[F].all(axis=1)
    if keep_f.sum() < 10:
        raise InvalidSpec("truncation leaves too few faces")
    image = build(Y, F)
    part, old = submesh(image, keep_f)
    return build(src[old], part.faces), p


def generate(spec: ZooSpec) -> DiscreteVarifold:
    """Build the mesh described by ``spec`` (deterministic)."""
    prm = spec.resolved()
    kind = spec.kind
    theta = None
    if kind in ("icosphere", "multiplicity_sphere"):
        X, F = icosphere_arrays(int(prm["subdiv"]))
        X = X * float(prm["radius"])
        if kind == "multiplicity_sphere":
            k = int(prm["theta"])
            if k < 1:
                raise InvalidSpec("theta must be >= 1")
            theta = np.full(F.shape[0], k)
    elif kind == "perturbed_sphere":
        X, F = icosphere_arrays(int(prm["subdiv"]))
        X = X * (1.0 + float(prm["eps"]) * real_sph_harm(int(prm["l"]), int(prm["m"]), X))[:, None]
    elif kind == "ellipsoid":
        ax = np.asarray(prm["axes"], float)
        if ax.shape != (3,) or (ax <= 0).any():
            raise InvalidSpec("axes must be three positive numbers")
        X, F = icosphere_arrays(int(prm["subdiv"]))
        X = X * ax
    elif kind == "torus":
        X, F = torus_arrays(float(prm["R"]), float(prm["r"]), int(prm["n_tube"]))
    elif kind == "y_prism":
        v, _ = _truncated_prism(prm)
        X, F = v.vertices, v.faces
    else:  # double_bubble
        if prm["truncation"] is None:
            X, F, _ = _bubble_image(float(prm["pole_distance"]), float(prm["resolution"]))
        else:
            from .moebius import inversion_map

            v, p = _truncated_prism(prm)
            X, F = inversion_map(v.vertices, p), v.faces
    jitter = float(prm.get("jitter", 0.0) or 0.0)
    if spec.seed is not None and jitter > 0:
        rng = np.random.default_rng(spec.seed)
        e = np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]]]), axis=1)
        h = float(np.median(np.linalg.norm(X[e[:, 0]] - X[e[:, 1]], axis=1)))
        X = X + jitter * h * rng.uniform(-1.0, 1.0, size=X.shape)
    return build(X, F, theta)


def analytic_reference(spec: ZooSpec) -> dict:
    """Closed-form invariants ``{mass, willmore, max_density, diameter}``.

    Entries that have no closed form are ``None``; kinds with nothing known
    raise :class:`NoReference`.
    """
    prm = spec.resolved()
    kind = spec.kind
    if kind == "icosphere":
        r = float(prm["radius"])
        return {"mass": 4 * math.pi * r * r, "willmore": 4 * math.pi, "max_density": 1.0, "diameter": 2 * r,
                "provenance": "round sphere"}
    if kind == "multiplicity_sphere":
        r, k = float(prm["radius"]), int(prm["theta"])
        return {"mass": 4 * math.pi * k * r * r, "willmore": 4 * math.pi * k, "max_density": float(k),
                "diameter": 2 * r, "provenance": "linearity in multiplicity"}
    if kind == "torus":
        R, r = float(prm["R"]), float(prm["r"])
        return {"mass": 4 * math.pi ** 2 * R * r, "willmore": torus_willmore_closed_form(R, r),
                "max_density": 1.0, "diameter": 2 * (R + r), "provenance": "round torus closed form"}
    if kind == "double_bubble" and prm["truncation"] is None:
        d = float(prm["pole_distance"])
        a = 1.0 / (2.0 * d)
        return {"mass": 9 * math.pi * a * a, "willmore": 6 * math.pi, "max_density": 1.5,
                "diameter": 2 * math.sqrt(3.0) * a, "provenance": "inverted Y prism"}
    if kind == "double_bubble":
        return {"mass": None, "willmore": 6 * math.pi, "max_density": 1.5, "diameter": None,
                "provenance": "inverted Y prism, truncation limit"}
    raise NoReference(f"no closed-form reference for kind {kind!r}")


# ---------------------------------------------------------------- helpers for tests and demos

def flat_grid(n: int = 20, size: float = 1.0, ambient_dim: int = 3, diagonal_flip: bool = True) -> DiscreteVarifold:
    """Triangulated square ``[0, size]^2`` in the plane of the first two axes."""
    t = np.linspace(0.0, size, n + 1)
    Xg, Yg = np.meshgrid(t, t, indexing="ij")
    X = np.stack([Xg.ravel(), Yg.ravel()], 1)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a, b, c, d = idx[:-1, :-1], idx[1:, :-1], idx[1:, 1:], idx[:-1, 1:]
    if diagonal_flip:
        alt = ((np.arange(n)[:, None] + np.arange(n)[None, :]) % 2).astype(bool)
        t1 = np.where(alt[..., None], np.stack([a, b, d], -1), np.stack([a, b, c], -1))
        t2 = np.where(alt[..., None], np.stack([b, c, d], -1), np.stack([a, c, d], -1))
    else:
        t1, t2 = np.stack([a, b, c], -1), np.stack([a, c, d], -1)
    F = np.concatenate([t1.reshape(-1, 3), t2.reshape(-1, 3)])
    return build(X, F, ambient_dim=ambient_dim)


def tube(radius: float = 1.0, length: float = 4.0, n_around: int = 48, n_along: int | None = None) -> DiscreteVarifold:
    """Open cylinder around the z-axis (boundary rings at both ends)."""
    if n_along is None:
        n_along = max(1, int(round(length / (2 * math.pi * radius / n_around))))
    u = 2 * math.pi * np.arange(n_around) / n_around
    z = np.linspace(0.0, length, n_along + 1)
    U, Z = np.meshgrid(u, z, indexing="ij")
    X = np.stack([radius * np.cos(U), radius * np.sin(U), Z], -1).reshape(-1, 3)
    idx = np.arange(n_around * (n_along + 1)).reshape(n_around, n_along + 1)
    a, b = idx[:, :-1], np.roll(idx, -1, axis=0)[:, :-1]
    c, d = np.roll(idx, -1, axis=0)[:, 1:], idx[:, 1:]
    F = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
    return build(X, F)
