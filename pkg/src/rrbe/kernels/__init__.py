"""Hot loops, with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time from ``RRBE_BACKEND``
(``numba`` by default, ``numpy`` to force the fallback). If numba cannot be
imported the numpy path is used. Both backends are bit-exact with each other.
"""
import logging
import os

from . import numpy_impl

log = logging.getLogger(__name__)

BACKEND = os.environ.get("RRBE_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    raise ImportError(f"RRBE_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")

if BACKEND == "numba":
    try:
        from . import numba_impl as _impl
    except ImportError:  # pragma: no cover - numba is a declared dependency
        log.warning("numba unavailable, using the numpy kernels")
        BACKEND = "numpy"
        _impl = numpy_impl
else:
    _impl = numpy_impl

predict_region = _impl.predict_region
recover_region = _impl.recover_region
walk_labels = _impl.walk_labels


def get_backend(name):
    """Return the kernel module for ``name`` regardless of the active backend."""
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        from . import numba_impl

        return numba_impl
    raise ValueError(name)
