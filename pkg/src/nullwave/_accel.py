"""Backend selection for the compiled kernels.

Set ``NULLWAVE_DISABLE_NUMBA=1`` to force the pure-numpy code path.
"""
import os

_FLAG = os.environ.get("NULLWAVE_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG in {"1", "true", "yes", "on"}

try:
    import numba  # noqa: F401
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLED_BY_ENV


def default_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n: int) -> int:
    """Cap the number of kernel threads; returns the value actually applied."""
    if n < 1:
        raise ValueError("thread count must be >= 1")
    if not HAVE_NUMBA:
        return 1
    import numba
    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n
