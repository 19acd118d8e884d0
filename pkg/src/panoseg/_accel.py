"""Backend selection for the hot kernels.

Kernels are compiled with numba when it is importable.  Setting
``PANOSEG_BACKEND=numpy`` (or numba's own ``NUMBA_DISABLE_JIT=1``) forces
the pure-numpy fallbacks, which produce identical results.
"""

import logging
import os

logger = logging.getLogger(__name__)

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

_requested = os.environ.get("PANOSEG_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ImportError(f"PANOSEG_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if numba is not None and "NUMBA_THREADING_LAYER" not in os.environ:
    # skip numba's TBB probe, which warns on older system TBB builds
    numba.config.THREADING_LAYER = "workqueue"

HAVE_NUMBA = numba is not None and os.environ.get("NUMBA_DISABLE_JIT", "0") != "1"
BACKEND = "numpy" if (_requested == "numpy" or not HAVE_NUMBA) else "numba"

if _requested == "numba" and not HAVE_NUMBA:
    logger.warning("PANOSEG_BACKEND=numba requested but numba is unavailable; using numpy")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is present, otherwise a no-op decorator."""
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return numba.njit(*args, **kwargs)


if numba is not None:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def max_threads():
    if numba is not None:
        return int(numba.config.NUMBA_NUM_THREADS)
    return os.cpu_count() or 1


def resolve_threads(n=None):
    """Map a ``--threads`` value to a worker count (0 or None means auto).

    ``PANOSEG_THREADS`` supplies the default when ``n`` is None.
    """
    if n is None:
        env = os.environ.get("PANOSEG_THREADS", "").strip()
        n = int(env) if env else 0
    n = int(n)
    if n < 0:
        raise ValueError(f"thread count must be >= 0, got {n}")
    return max_threads() if n == 0 else n


def set_threads(n=None):
    """Apply a thread count to numba's pool; returns the count actually used."""
    n = resolve_threads(n)
    if numba is not None:
        # numba refuses more threads than its pool was launched with
        numba.set_num_threads(max(1, min(n, max_threads())))
    return n
