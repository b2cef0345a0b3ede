"""numba-compiled versions of the loop kernels in ``_loops``."""

import numba

from . import _loops

_jit = numba.njit(cache=True)

erode_obstacles = _jit(_loops.erode_obstacles)
dilate_obstacles = _jit(_loops.dilate_obstacles)
small_component_mask = _jit(_loops.small_component_mask)
contour_pixels = _jit(_loops.contour_pixels)
trace_paths = _jit(_loops.trace_paths)
select_min_per_bin = _jit(_loops.select_min_per_bin)
nearest_two = _jit(_loops.nearest_two)
hamming_pairs = _jit(_loops.hamming_pairs)
render_free = _jit(_loops.render_free)
