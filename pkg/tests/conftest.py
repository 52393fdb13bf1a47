import functools
import warnings

import numpy as np
import pytest

from varifold_lab import zoo


@functools.lru_cache(maxsize=None)
def _gen(kind, items):
    return zoo.generate(zoo.ZooSpec(kind, dict(items)))


def gen(kind, **params):
    """Cached zoo mesh (meshes are immutable)."""
    return _gen(kind, tuple(sorted(params.items())))


def sphere(subdiv=4, **kw):
    return gen("icosphere", subdiv=subdiv, **kw)


def random_rotation(rng):
    Q, R = np.linalg.qr(rng.normal(size=(3, 3)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    return Q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_numba():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", module="numba")
        yield
