"""Optional numba acceleration.

Hot numeric kernels in this package are written as plain loops over numpy
arrays and compiled with numba when it is available.  Setting the
environment variable ``STANCEKIT_DISABLE_NUMBA=1`` (checked once at import
time) forces the pure numpy/Python fallback path, which computes the same
quantities without JIT compilation.
"""

import os

ENV_FLAG = "STANCEKIT_DISABLE_NUMBA"

_disabled = os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    numba = None
    HAVE_NUMBA = False

NUMBA_ENABLED = HAVE_NUMBA and not _disabled


def maybe_jit(func):
    """Return ``numba.njit(cache=True)(func)`` when acceleration is on, else ``func``."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(func)
    return func


def jit_parallel(func):
    """Compile with ``parallel=True`` when acceleration is on, else return ``func``."""
    if NUMBA_ENABLED:
        return numba.njit(parallel=True)(func)
    return func
