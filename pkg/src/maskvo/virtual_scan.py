"""Range scans synthesized from free-space mask contours.

The pipeline mirrors a 2D laser: clean the binary drivable-area mask with a
morphological opening and a minimum-area filter, take the free-side boundary
pixels next to obstacles as returns, convert them to vehicle-frame meters,
and keep the closest return per angular bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import accel
from .errors import DegenerateMaskError
from .geometry import TWO_PI

DEFAULT_IMAGE_SIZE_PX = 384
DEFAULT_SCALE_M_PER_PX = 0.03984
DEFAULT_OPEN_KERNEL_PX = 2
DEFAULT_MIN_OBSTACLE_AREA_PX = 50
DEFAULT_BORDER_MARGIN_PX = 10
DEFAULT_ANGLE_INCREMENT = math.radians(1.0)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FreeSpaceMask:
    """Square binary grid in the vehicle frame; True cells are drivable.

    Pixel (row r, col c) center maps to vehicle coordinates
    ``x = (h/2 - r - 0.5) * scale``, ``y = (w/2 - c - 0.5) * scale``
    with +x image-up (vehicle forward) and +y image-left.
    """

    free: np.ndarray
    scale: float

    def __post_init__(self) -> None:
        arr = np.asarray(self.free)
        if arr.dtype != np.bool_:
            raise ValueError("mask cells must be boolean")
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"mask must be square, got shape {arr.shape}")
        if not self.scale > 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "free", _readonly(arr))
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def size(self) -> int:
        return self.free.shape[0]

    @property
    def center_pixel(self) -> tuple[int, int]:
        return self.free.shape[0] // 2, self.free.shape[1] // 2

    def pixel_to_metric(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Vehicle-frame coordinates of the given pixel centers, shape (N, 2)."""
        h, w = self.free.shape
        x = (h * 0.5 - np.asarray(rows, dtype=float) - 0.5) * self.scale
        y = (w * 0.5 - np.asarray(cols, dtype=float) - 0.5) * self.scale
        return np.stack([x, y], axis=-1)

    def metric_to_pixel(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Containing pixel of each metric point; may fall outside the image."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h, w = self.free.shape
        rows = np.floor(h * 0.5 - pts[:, 0] / self.scale).astype(np.int64)
        cols = np.floor(w * 0.5 - pts[:, 1] / self.scale).astype(np.int64)
        return rows, cols

    def contains_pixel(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        h, w = self.free.shape
        return (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)


@dataclass(frozen=True)
class Contour:
    """Ordered free-side boundary pixels; consecutive entries are 8-connected."""

    pixels: np.ndarray  # (L, 2) int64 rows/cols

    def __post_init__(self) -> None:
        object.__setattr__(self, "pixels", _readonly(np.asarray(self.pixels)))

    def __len__(self) -> int:
        return len(self.pixels)

    @property
    def closed(self) -> bool:
        if len(self.pixels) < 3:
            return False
        gap = np.abs(self.pixels[0] - self.pixels[-1]).max()
        return gap <= 1


def bin_count(angle_increment: float) -> int:
    """Number of angular bins covering the full circle."""
    if not angle_increment > 0.0:
        raise ValueError(f"angle_increment must be positive, got {angle_increment}")
    return int(math.ceil(TWO_PI / angle_increment - 1e-12))


@dataclass(frozen=True)
class VirtualScan:
    """Per-bin closest boundary returns in the vehicle frame.

    ``bin_indices`` follow ``floor((atan2(y, x) + pi) / angle_increment)``
    and are strictly ascending; there is at most one return per bin.
    """

    angle_increment: float
    bin_indices: np.ndarray  # (S,) int64
    points: np.ndarray  # (S, 2) float64
    ranges: np.ndarray  # (S,) float64

    def __post_init__(self) -> None:
        object.__setattr__(self, "bin_indices", _readonly(np.asarray(self.bin_indices)))
        object.__setattr__(self, "points", _readonly(np.asarray(self.points)))
        object.__setattr__(self, "ranges", _readonly(np.asarray(self.ranges)))

    def __len__(self) -> int:
        return len(self.bin_indices)

    @property
    def n_bins(self) -> int:
        return bin_count(self.angle_increment)

    @classmethod
    def empty(cls, angle_increment: float = DEFAULT_ANGLE_INCREMENT) -> "VirtualScan":
        return cls(
            angle_increment,
            np.empty(0, np.int64),
            np.empty((0, 2), float),
            np.empty(0, float),
        )


@dataclass(frozen=True)
class ScanParams:
    """Tunables of the mask-to-scan pipeline."""

    open_kernel_px: int = DEFAULT_OPEN_KERNEL_PX
    min_obstacle_area_px: int = DEFAULT_MIN_OBSTACLE_AREA_PX
    border_margin_px: int = DEFAULT_BORDER_MARGIN_PX
    angle_increment: float = DEFAULT_ANGLE_INCREMENT

    def __post_init__(self) -> None:
        if self.open_kernel_px < 1:
            raise ValueError("open_kernel_px must be >= 1")
        if self.min_obstacle_area_px < 0:
            raise ValueError("min_obstacle_area_px must be >= 0")
        if self.border_margin_px < 0:
            raise ValueError("border_margin_px must be >= 0")
        if not self.angle_increment > 0.0:
            raise ValueError("angle_increment must be positive")


def morphological_open(mask: FreeSpaceMask, kernel_px: int) -> FreeSpaceMask:
    """Open the obstacle set with a square structuring element of side kernel_px."""
    if kernel_px < 1:
        raise ValueError(f"kernel_px must be >= 1, got {kernel_px}")
    if kernel_px > mask.size:
        raise ValueError(
            f"kernel_px {kernel_px} exceeds mask size {mask.size}"
        )
    if kernel_px == 1:
        return mask
    obstacle = ~mask.free
    eroded = accel.erode_obstacles(obstacle, kernel_px)
    opened = accel.dilate_obstacles(eroded, kernel_px)
    return FreeSpaceMask(~opened, mask.scale)


def remove_small_obstacles(mask: FreeSpaceMask, min_area_px: int) -> FreeSpaceMask:
    """Flip 8-connected obstacle components smaller than min_area_px to free."""
    if min_area_px < 0:
        raise ValueError(f"min_area_px must be >= 0, got {min_area_px}")
    if min_area_px == 0:
        return mask
    small = accel.small_component_mask(~mask.free, min_area_px)
    return FreeSpaceMask(mask.free | small, mask.scale)


def extract_contours(mask: FreeSpaceMask) -> list[Contour]:
    """Trace the free-side boundary pixels adjacent to obstacles.

    Pixels on the image border never count as contour points.  Raises
    :class:`DegenerateMaskError` when the vehicle-center pixel is not free.
    """
    r0, c0 = mask.center_pixel
    if not mask.free[r0, c0]:
        raise DegenerateMaskError("vehicle-center pixel is an obstacle")
    boundary = accel.contour_pixels(mask.free)
    pts, offsets = accel.trace_paths(boundary)
    return [
        Contour(pts[offsets[i] : offsets[i + 1]].copy())
        for i in range(len(offsets) - 1)
    ]


def contours_to_scan(
    contours: list[Contour],
    mask: FreeSpaceMask,
    angle_increment: float = DEFAULT_ANGLE_INCREMENT,
    border_margin_px: int = DEFAULT_BORDER_MARGIN_PX,
) -> VirtualScan:
    """Bin contour pixels by angle and keep the closest return per bin.

    Pixels within ``border_margin_px`` of any image edge are discarded; ties
    within a bin keep the first pixel in row-major order.
    """
    n_bins = bin_count(angle_increment)
    if contours:
        pixels = np.concatenate([c.pixels for c in contours], axis=0)
    else:
        pixels = np.empty((0, 2), np.int64)
    if len(pixels) == 0:
        return VirtualScan.empty(angle_increment)
    h, w = mask.free.shape
    r = pixels[:, 0]
    c = pixels[:, 1]
    m = border_margin_px
    keep = (r >= m) & (r < h - m) & (c >= m) & (c < w - m)
    pixels = pixels[keep]
    if len(pixels) == 0:
        return VirtualScan.empty(angle_increment)
    xy = mask.pixel_to_metric(pixels[:, 0], pixels[:, 1])
    ranges = np.sqrt(xy[:, 0] * xy[:, 0] + xy[:, 1] * xy[:, 1])
    angles = np.arctan2(xy[:, 1], xy[:, 0])
    bins = np.floor((angles + math.pi) / angle_increment).astype(np.int64) % n_bins
    order = pixels[:, 0] * w + pixels[:, 1]
    sel = accel.select_min_per_bin(bins, ranges, order.astype(np.int64), n_bins)
    return VirtualScan(angle_increment, bins[sel], xy[sel], ranges[sel])


def make_scan(
    mask: FreeSpaceMask, params: ScanParams = ScanParams()
) -> tuple[VirtualScan, FreeSpaceMask]:
    """Full mask-to-scan pipeline; also returns the cleaned mask for ROI use."""
    opened = morphological_open(mask, params.open_kernel_px)
    cleaned = remove_small_obstacles(opened, params.min_obstacle_area_px)
    contours = extract_contours(cleaned)
    scan = contours_to_scan(
        contours, cleaned, params.angle_increment, params.border_margin_px
    )
    return scan, cleaned
