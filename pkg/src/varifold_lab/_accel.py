"""Optional numba acceleration.

Hot loops live in :mod:`varifold_lab.kernels` in two flavours: an ``@njit``
version and a plain numpy version. The numba path is used when numba imports
and ``VARIFOLD_LAB_NO_NUMBA`` is unset (or ``0``). ``VARIFOLD_LAB_THREADS``
sets the numba thread count. ``NUMBA_THREADING_LAYER`` defaults to
``workqueue``, which every numba build ships.
"""
import os

# skip the tbb layer: an installed tbb older than numba wants triggers a
# warning on every run
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _flag(name):
    return os.environ.get(name, "").strip().lower() not in {"", "0", "false", "no"}


def numba_enabled():
    return HAVE_NUMBA and not _flag("VARIFOLD_LAB_NO_NUMBA")


def set_num_threads(n=None):
    """Set the numba worker count; ``None`` reads ``VARIFOLD_LAB_THREADS``."""
    if n is None:
        raw = os.environ.get("VARIFOLD_LAB_THREADS")
        if not raw:
            return
        n = int(raw)
    if HAVE_NUMBA:
        n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n)


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]):
        return args[0]
    return lambda f: f


if HAVE_NUMBA:
    prange = numba.prange
else:  # pragma: no cover
    prange = range
