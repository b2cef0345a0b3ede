"""Vectorized numpy implementations of the grid kernels.

Bit-for-bit compatible with the numba backend: boolean/integer outputs are
identical, and float expressions mirror the loop kernels element-wise.
The contour tracer is inherently sequential and is shared from ``_loops``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from . import _loops

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def erode_obstacles(obstacle: np.ndarray, k: int) -> np.ndarray:
    padded = np.pad(obstacle, ((0, k - 1), (0, k - 1)), constant_values=True)
    return sliding_window_view(padded, (k, k)).all(axis=(2, 3))


def dilate_obstacles(eroded: np.ndarray, k: int) -> np.ndarray:
    padded = np.pad(eroded, ((k - 1, 0), (k - 1, 0)), constant_values=False)
    return sliding_window_view(padded, (k, k)).any(axis=(2, 3))


def small_component_mask(obstacle: np.ndarray, min_area: int) -> np.ndarray:
    labels, n = ndimage.label(obstacle, structure=_EIGHT_CONNECTED)
    if n == 0:
        return np.zeros_like(obstacle)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    small = sizes < min_area
    small[0] = False
    return small[labels]


def contour_pixels(free: np.ndarray) -> np.ndarray:
    obstacle = ~free
    near_obstacle = np.zeros_like(free)
    h, w = free.shape
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            src = obstacle[
                max(dr, 0) : h + min(dr, 0), max(dc, 0) : w + min(dc, 0)
            ]
            near_obstacle[
                max(-dr, 0) : h + min(-dr, 0), max(-dc, 0) : w + min(-dc, 0)
            ] |= src
    out = free & near_obstacle
    out[0, :] = False
    out[-1, :] = False
    out[:, 0] = False
    out[:, -1] = False
    return out


trace_paths = _loops.trace_paths


def select_min_per_bin(
    bins: np.ndarray, ranges: np.ndarray, order: np.ndarray, n_bins: int
) -> np.ndarray:
    if bins.shape[0] == 0:
        return np.empty(0, np.int64)
    perm = np.lexsort((order, ranges, bins))
    sorted_bins = bins[perm]
    first = np.ones(len(perm), dtype=bool)
    first[1:] = sorted_bins[1:] != sorted_bins[:-1]
    return perm[first]


def nearest_two(query: np.ndarray, refs: np.ndarray):
    diff = query[:, None, :] - refs[None, :, :]
    d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]
    i1 = np.argmin(d2, axis=1)
    d2[np.arange(len(query)), i1] = np.inf
    i2 = np.argmin(d2, axis=1)
    return i1.astype(np.int64), i2.astype(np.int64)


def hamming_pairs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a ^ b).sum(axis=1).astype(np.int64)


def render_free(
    size: int,
    scale: float,
    px: float,
    py: float,
    ptheta: float,
    verts: np.ndarray,
    offsets: np.ndarray,
    bounds: np.ndarray,
    occlusion: bool,
) -> np.ndarray:
    h = w = size
    r = np.arange(h, dtype=float)[:, None]
    c = np.arange(w, dtype=float)[None, :]
    xv = (h * 0.5 - r - 0.5) * scale
    yv = (w * 0.5 - c - 0.5) * scale
    cth = np.cos(ptheta)
    sth = np.sin(ptheta)
    wx = px + cth * xv - sth * yv
    wy = py + sth * xv + cth * yv
    free = (
        (wx >= bounds[0]) & (wx <= bounds[2]) & (wy >= bounds[1]) & (wy <= bounds[3])
    )
    dx = wx - px
    dy = wy - py
    for p in range(len(offsets) - 1):
        poly = verts[offsets[p] : offsets[p + 1]]
        inside = np.ones((h, w), dtype=bool)
        t_lo = np.full((h, w), -np.inf)
        t_hi = np.full((h, w), np.inf)
        feasible = np.ones((h, w), dtype=bool)
        for e in range(len(poly)):
            v0 = poly[e]
            v1 = poly[(e + 1) % len(poly)]
            nx = v1[1] - v0[1]
            ny = -(v1[0] - v0[0])
            inside &= nx * (wx - v0[0]) + ny * (wy - v0[1]) <= 0.0
            if occlusion:
                denom = nx * dx + ny * dy
                num = nx * (v0[0] - px) + ny * (v0[1] - py)
                t = np.divide(num, denom, out=np.zeros_like(denom), where=denom != 0.0)
                t_hi = np.where((denom > 0.0) & (t < t_hi), t, t_hi)
                t_lo = np.where((denom < 0.0) & (t > t_lo), t, t_lo)
                feasible &= ~((denom == 0.0) & (num < 0.0))
        free &= ~inside
        if occlusion:
            hits = feasible & (t_lo <= t_hi) & (t_lo > 0.0) & (t_lo < 1.0)
            free &= ~hits
    return free
