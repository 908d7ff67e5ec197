"""Kernel backend selection.

Hot loops are compiled with numba when it is importable and the environment
variable ``QUASIREG_DISABLE_NUMBA`` is unset (or ``0``). Otherwise the pure
numpy implementations are used. The choice is fixed at import time.
"""
import os

# TBB builds shipped with some distros are too old for numba; OpenMP is not.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

_flag = os.environ.get("QUASIREG_DISABLE_NUMBA", "0").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _flag in ("", "0", "false", "no")


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True``; identity decorator without numba."""
    if not HAVE_NUMBA:
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


if HAVE_NUMBA:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def set_workers(workers):
    """Set the kernel thread count. Results do not depend on it."""
    if USE_NUMBA and workers:
        numba.set_num_threads(max(1, min(int(workers), numba.config.NUMBA_NUM_THREADS)))


def default_workers():
    return os.cpu_count() or 1
