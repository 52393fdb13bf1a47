import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import pdist

from conftest import gen, sphere
from varifold_lab import _accel, kernels
from varifold_lab.mesh import ball_masses, diameter

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not importable")


def grid_disk_triangle(cx, cy, r, l1, bx, by, n=1500):
    """Midpoint-rule area of disk ∩ triangle on an n x n pixel grid."""
    xs = np.linspace(min(0, bx, cx - r), max(l1, bx, cx + r), n)
    ys = np.linspace(min(0, cy - r), max(by, cy + r), n)
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    X, Y = np.meshgrid(xs[:-1] + hx / 2, ys[:-1] + hy / 2, indexing="ij")
    # barycentric inside test for (0,0), (l1,0), (bx,by)
    s = Y / by
    t = (X - bx * s) / l1
    tri = (s >= 0) & (t >= 0) & (s + t <= 1)
    disk = (X - cx) ** 2 + (Y - cy) ** 2 <= r * r
    return (tri & disk).sum() * hx * hy


def test_disk_triangle_limits():
    # disk swallowing the triangle, and a small disk well inside it
    assert kernels.disk_triangle_area(0.3, 0.3, 100.0, 1.0, 0.2, 1.0) == pytest.approx(0.5, rel=1e-12)
    assert kernels.disk_triangle_area(0.4, 0.3, 0.01, 1.0, 0.2, 1.0) == pytest.approx(math.pi * 0.01, rel=1e-12)
    assert kernels.disk_triangle_area(5.0, 5.0, 0.01, 1.0, 0.2, 1.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("cx,cy,r", [(0.0, 0.0, 0.5), (0.5, 0.0, 0.3), (0.4, 0.4, 0.45), (1.2, 0.5, 0.7),
                                     (0.3, -0.2, 0.35)])
def test_disk_triangle_against_pixel_count(cx, cy, r):
    exact = kernels.disk_triangle_area(cx, cy, r * r, 1.0, 0.3, 0.8)
    assert exact == pytest.approx(grid_disk_triangle(cx, cy, r, 1.0, 0.3, 0.8), abs=2e-3)


@needs_numba
@settings(max_examples=200, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.01, 3), st.floats(0.1, 2), st.floats(-1, 2), st.floats(0.1, 2))
def test_disk_triangle_backends_agree(cx, cy, r, l1, bx, by):
    a = kernels.disk_triangle_area(cx, cy, r * r, l1, bx, by)
    b = kernels._disk_triangle_nb(cx, cy, r * r, l1, bx, by)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-14)
    assert -1e-14 <= a <= 0.5 * l1 * by + 1e-12


@needs_numba
@pytest.mark.parametrize("kind,params", [("perturbed_sphere", {"subdiv": 3, "eps": 0.1}),
                                         ("torus", {"n_tube": 24}),
                                         ("double_bubble", {"resolution": 0.04})])
def test_ball_masses_backends_agree(kind, params, rng):
    v = gen(kind, **params)
    centers = np.vstack([v.vertices[rng.choice(v.n_vertices, 40, replace=False)],
                         rng.normal(scale=1.5, size=(20, 3))])
    radii = np.array([0.05, 0.2, 0.7, 2.0, 10.0])
    a = ball_masses(v, centers, radii, backend="numba")
    b = ball_masses(v, centers, radii, backend="numpy")
    assert np.allclose(a, b, rtol=1e-13, atol=1e-14)


@needs_numba
@pytest.mark.parametrize("subdiv", [2, 4])
def test_farthest_pair_backends_and_bruteforce(subdiv):
    v = gen("perturbed_sphere", subdiv=subdiv, eps=0.07)
    d_ref = pdist(v.vertices).max()
    a = kernels.farthest_pair(v.vertices, backend_name="numba")
    b = kernels.farthest_pair(v.vertices, backend_name="numpy")
    assert a[1] == b[1]
    assert math.sqrt(a[0]) == pytest.approx(d_ref, rel=1e-15)
    assert math.sqrt(b[0]) == pytest.approx(d_ref, rel=1e-15)


def test_farthest_pair_tie_is_lexicographic():
    # an exact square: both diagonals tie, the smaller index pair wins
    X = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float)
    for b in ("numba", "numpy"):
        assert kernels.farthest_pair(X, backend_name=b)[1] == (0, 2)


def test_diameter_pair_stable_under_rotation(rng):
    v = sphere(3)
    _, pair = diameter(v)
    from conftest import random_rotation
    Q = random_rotation(rng)
    from varifold_lab.mesh import with_vertices
    _, pair2 = diameter(with_vertices(v, v.vertices @ Q.T))
    d1 = np.linalg.norm(v.vertices[pair[0]] - v.vertices[pair[1]])
    d2 = np.linalg.norm(v.vertices[pair2[0]] - v.vertices[pair2[1]])
    assert d1 == pytest.approx(d2, rel=1e-12)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.backend("cuda")


def test_env_flag_selects_numpy():
    env = dict(os.environ, VARIFOLD_LAB_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", "from varifold_lab import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
