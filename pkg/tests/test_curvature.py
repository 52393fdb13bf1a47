import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import gen, random_rotation, sphere
from varifold_lab import curvature, mesh, zoo
from varifold_lab.errors import NumericFailure

FOUR_PI = 4 * math.pi


def interior(v):
    return np.flatnonzero(~v.masked)


# --------------------------------------------------------------- mean curvature

def test_sphere_mean_curvature_vector():
    v = sphere(4)
    H = curvature.mean_curvature(v).mean_curvature
    norms = np.linalg.norm(H, axis=1)
    assert np.all(np.abs(norms / 2 - 1) <= 0.01)
    inward = -v.vertices / np.linalg.norm(v.vertices, axis=1)[:, None]
    cosang = np.einsum("ij,ij->i", H / norms[:, None], inward)
    assert np.degrees(np.arccos(np.clip(cosang, -1, 1))).max() <= 1.0


def test_flat_grid_is_minimal():
    v = zoo.flat_grid(12)
    f = curvature.mean_curvature(v)
    assert np.linalg.norm(f.mean_curvature[interior(v)], axis=1).max() <= 1e-10
    assert np.isnan(f.mean_curvature[v.masked]).all()
    assert not f.validity_mask[v.masked].any()


def test_cylinder_mean_curvature():
    v = zoo.tube(radius=1.0, length=4.0, n_around=64)
    H = curvature.mean_curvature(v).mean_curvature[interior(v)]
    assert np.all(np.abs(np.linalg.norm(H, axis=1) - 1) <= 0.02)


def test_nonfinite_vertices_raise():
    X = sphere(2).vertices.copy()
    X[0] = np.nan
    v = mesh.DiscreteVarifold(X, sphere(2).faces, sphere(2).multiplicity, sphere(2).tags)
    with pytest.raises(NumericFailure):
        curvature.mean_curvature(v)


# --------------------------------------------------------------- gauss curvature

def test_sphere_gauss_curvature():
    v = sphere(4)
    K = curvature.gauss_curvature(v)
    assert np.all(np.abs(K - 1) <= 0.02)
    assert abs(curvature.total_gauss_curvature(v) - FOUR_PI) <= 1e-8


def test_flat_grid_gauss_zero():
    v = zoo.flat_grid(8, diagonal_flip=False)
    K = curvature.gauss_curvature(v)[interior(v)]
    assert np.abs(K).max() <= 1e-12


def test_torus_total_gauss():
    assert abs(curvature.total_gauss_curvature(gen("torus", n_tube=48))) <= 1e-8


@pytest.mark.parametrize("kind,params,chi", [("icosphere", {"subdiv": 3}, 2), ("ellipsoid", {"subdiv": 3}, 2),
                                             ("perturbed_sphere", {"subdiv": 4, "eps": 0.1}, 2),
                                             ("torus", {"n_tube": 24}, 0)])
def test_gauss_bonnet(kind, params, chi):
    v = gen(kind, **params)
    assert v.euler_characteristic == chi
    assert abs(curvature.total_gauss_curvature(v) - 2 * math.pi * chi) <= 1e-8


# --------------------------------------------------------------- willmore energy

def test_sphere_energy_subdiv4():
    assert abs(curvature.willmore_energy(sphere(4)).willmore / FOUR_PI - 1) <= 0.005


def test_two_spheres_add():
    a = sphere(4)
    two = mesh.disjoint_union(a, mesh.with_vertices(a, a.vertices + [5.0, 0, 0]))
    W = curvature.willmore_energy(two).willmore
    assert abs(W / (8 * math.pi) - 1) <= 0.005
    assert W == pytest.approx(2 * curvature.willmore_energy(a).willmore, rel=1e-12)


@pytest.mark.parametrize("lam", [0.5, 3.0, 5.0])
def test_scale_invariance(lam):
    v = gen("perturbed_sphere", subdiv=4, eps=0.1)
    a = curvature.willmore_energy(v).willmore
    b = curvature.willmore_energy(mesh.with_vertices(v, lam * v.vertices)).willmore
    assert abs(b / a - 1) <= 1e-10


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_rigid_motion_invariance(seed):
    rng = np.random.default_rng(seed)
    v = gen("perturbed_sphere", subdiv=3, eps=0.1)
    Q = random_rotation(rng)
    w = mesh.with_vertices(v, v.vertices @ Q.T + rng.normal(scale=3, size=3))
    e1, e2 = curvature.willmore_energy(v), curvature.willmore_energy(w)
    assert abs(e2.willmore / e1.willmore - 1) <= 1e-10
    h1 = np.linalg.norm(curvature.mean_curvature(v).mean_curvature, axis=1)
    h2 = np.linalg.norm(curvature.mean_curvature(w).mean_curvature, axis=1)
    assert np.allclose(h1, h2, rtol=1e-10, atol=0)


@pytest.mark.parametrize("k", [2, 3])
def test_multiplicity_linear(k):
    v = sphere(3)
    a = curvature.willmore_energy(v)
    b = curvature.willmore_energy(mesh.with_multiplicity(v, k))
    assert b.willmore == pytest.approx(k * a.willmore, rel=1e-15)
    # H itself does not depend on a uniform multiplicity
    assert np.allclose(curvature.mean_curvature(v).mean_curvature,
                       curvature.mean_curvature(mesh.with_multiplicity(v, k)).mean_curvature, rtol=1e-13)


def test_breakdown_consistency():
    v = gen("ellipsoid", subdiv=4)
    e = curvature.willmore_energy(v)
    assert e.willmore == pytest.approx(e.mean_sq_integral / 4, rel=1e-14)
    # |A|^2 = |H|^2 - 2K and |A°|^2 = |A|^2 - |H|^2/2 for surfaces in R^3
    assert e.full_sff_sq_integral == pytest.approx(e.mean_sq_integral - 2 * e.gauss_integral, rel=1e-12)
    assert e.tracefree_sq_integral == pytest.approx(e.full_sff_sq_integral - e.mean_sq_integral / 2, abs=1e-12)
    assert e.excluded_mass == 0.0
    assert not e.codim_heuristic


def test_codimension_flag():
    v = mesh.build(np.pad(sphere(2).vertices, ((0, 0), (0, 1))), sphere(2).faces)
    assert curvature.willmore_energy(v).codim_heuristic


# --------------------------------------------------------------- delta

def test_sphere_delta_small():
    for k in (4, 5):
        assert curvature.delta_tolerance(sphere(k)) <= 0.1


def test_delta_linear_in_eps():
    ratios = [curvature.delta_tolerance(gen("perturbed_sphere", subdiv=6, eps=e)) / e for e in (0.025, 0.05, 0.1)]
    assert max(ratios) / min(ratios) <= 1.5


def test_double_bubble_delta():
    v = gen("double_bubble", resolution=0.02)
    d = curvature.delta_tolerance(v)
    assert abs(d * d / (2 * math.pi) - 1) <= 0.05


def test_junction_excluded_mass_vanishes():
    ex = [curvature.willmore_energy(gen("double_bubble", resolution=r)).excluded_mass for r in (0.04, 0.02, 0.01)]
    assert ex[0] > ex[1] > ex[2] > 0
    # first order in the mesh size
    assert math.log(ex[0] / ex[2]) / math.log(4.0) >= 0.9


# --------------------------------------------------------------- first variation

def poly_field(seed):
    rng = np.random.default_rng(seed)
    A, b, C = rng.normal(size=(3, 3)), rng.normal(size=3), 0.5 * rng.normal(size=(3, 3, 3))

    def fn(P):
        return P @ A.T + b + np.einsum("ijk,pj,pk->pi", C, P, P)

    def jac(P):
        return A[None] + np.einsum("ijk,pk->pij", C, P) + np.einsum("ijk,pj->pik", C, P)

    return fn, jac


@pytest.mark.parametrize("kind,params", [("icosphere", {"subdiv": 4}), ("perturbed_sphere", {"subdiv": 4, "eps": 0.1}),
                                         ("ellipsoid", {"subdiv": 4}), ("torus", {"n_tube": 48})])
@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_first_variation(kind, params, seed):
    lhs, rhs = curvature.first_variation_pair(gen(kind, **params), *poly_field(seed))
    assert abs(lhs - rhs) <= 0.02 * max(abs(lhs), abs(rhs))
