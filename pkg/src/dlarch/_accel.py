"""Backend and thread-count selection for the hot kernels.

``DLARCH_BACKEND=numpy`` forces the pure-numpy fallback; anything else (or
unset) uses numba when it can be imported.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor

logger = logging.getLogger(__name__)

_requested = os.environ.get("DLARCH_BACKEND", "numba").strip().lower()

if _requested == "numpy":
    HAVE_NUMBA = False
else:
    try:
        import numba  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        logger.warning("numba unavailable, falling back to numpy kernels")
        HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"

_threads = 1
_pool = None


def set_num_threads(n):
    """Set the worker count used to split batches across samples.

    Reductions over samples always run in ascending sample order, so results
    do not depend on ``n``.
    """
    global _threads, _pool
    n = int(n)
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    if n != _threads and _pool is not None:
        _pool.shutdown()
        _pool = None
    _threads = n


def get_num_threads():
    return _threads


def map_chunks(fn, n_items, *arrays):
    """Apply ``fn`` to contiguous sample chunks of ``arrays`` and return results in order."""
    if _threads == 1 or n_items < 2:
        return [fn(*arrays)]
    global _pool
    if _pool is None:
        _pool = ThreadPoolExecutor(max_workers=_threads)
    n_chunks = min(_threads, n_items)
    bounds = [n_items * i // n_chunks for i in range(n_chunks + 1)]
    futures = [
        _pool.submit(fn, *(a[lo:hi] for a in arrays))
        for lo, hi in zip(bounds[:-1], bounds[1:])
    ]
    return [f.result() for f in futures]
