"""Numba switch.

Hot kernels are written once as plain loops and compiled with numba when it is
available. Set ``RUGBYEFFORT_DISABLE_NUMBA=1`` to force the pure-numpy path
(vectorized kernels, interpreted leapfrog) instead.
"""
import os

_FLAG = os.environ.get("RUGBYEFFORT_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """Compile ``func`` in nopython mode, releasing the GIL.

    Always compiles when numba is importable, so both paths stay testable in
    one process; ``USE_NUMBA`` only decides which path callers pick.
    """
    if numba is None:  # pragma: no cover
        return func
    return numba.njit(nogil=True, cache=True)(func)


def is_jitted(func) -> bool:
    return numba is not None and isinstance(func, numba.core.dispatcher.Dispatcher)
