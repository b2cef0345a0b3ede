"""Hot grid kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time from the ``MASKVO_NUMBA``
environment variable:

* unset or ``auto`` — numba when importable, numpy otherwise;
* ``0`` / ``off`` / ``false`` / ``numpy`` — force the numpy path;
* ``1`` / ``on`` / ``true`` / ``numba`` — require numba, fail if missing.

Both paths produce identical outputs (see ``tests/test_accel.py``); the
numpy path trades speed for a dependency-light install.  Run
``benchmarks/bench_accel.py`` to compare them on your machine.
"""

import os

from . import numpy_backend

_KERNELS = (
    "erode_obstacles",
    "dilate_obstacles",
    "small_component_mask",
    "contour_pixels",
    "trace_paths",
    "select_min_per_bin",
    "nearest_two",
    "hamming_pairs",
    "render_free",
)


def _select_backend():
    flag = os.environ.get("MASKVO_NUMBA", "auto").strip().lower()
    if flag in ("0", "off", "false", "numpy"):
        return numpy_backend, "numpy"
    try:
        from . import numba_backend
    except ImportError:
        if flag in ("1", "on", "true", "numba"):
            raise
        return numpy_backend, "numpy"
    return numba_backend, "numba"


_backend, ACTIVE_BACKEND = _select_backend()

erode_obstacles = _backend.erode_obstacles
dilate_obstacles = _backend.dilate_obstacles
small_component_mask = _backend.small_component_mask
contour_pixels = _backend.contour_pixels
trace_paths = _backend.trace_paths
select_min_per_bin = _backend.select_min_per_bin
nearest_two = _backend.nearest_two
hamming_pairs = _backend.hamming_pairs
render_free = _backend.render_free

__all__ = list(_KERNELS) + ["ACTIVE_BACKEND"]
