"""Ground-plane features with binary descriptors and the motion-prior matcher."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import accel
from .geometry import Pose2, transform_points
from .virtual_scan import FreeSpaceMask

DESCRIPTOR_BITS = 256
DESCRIPTOR_WORDS = 4  # uint64 words, most significant first
DEFAULT_MATCH_RADIUS_M = 0.1
DEFAULT_MAX_HAMMING_BITS = 64


def descriptor_to_hex(words: np.ndarray) -> str:
    """64 lowercase hex chars, most significant nibble first."""
    return "".join(f"{int(w):016x}" for w in words)


def hex_to_descriptor(text: str) -> np.ndarray:
    """Parse a 64-char hex descriptor into 4 uint64 words."""
    if len(text) != 64:
        raise ValueError(f"descriptor must be 64 hex chars, got {len(text)}")
    value = int(text, 16)
    words = [(value >> (64 * (3 - i))) & 0xFFFFFFFFFFFFFFFF for i in range(4)]
    return np.array(words, dtype=np.uint64)


@dataclass(frozen=True)
class FeatureFrame:
    """Features of one frame: ids, vehicle-frame positions, 256-bit descriptors."""

    timestamp: float
    ids: np.ndarray  # (N,) int64
    positions: np.ndarray  # (N, 2) float64, meters
    descriptors: np.ndarray  # (N, 4) uint64

    def __post_init__(self) -> None:
        ids = np.asarray(self.ids, dtype=np.int64)
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        desc = np.asarray(self.descriptors, dtype=np.uint64).reshape(-1, 4)
        if not (len(ids) == len(pos) == len(desc)):
            raise ValueError("ids, positions and descriptors must have equal length")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("feature ids must be unique within a frame")
        if not np.isfinite(pos).all():
            raise ValueError("feature positions must be finite")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "descriptors", desc)

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def empty(cls, timestamp: float = 0.0) -> "FeatureFrame":
        return cls(
            timestamp,
            np.empty(0, np.int64),
            np.empty((0, 2), float),
            np.empty((0, 4), np.uint64),
        )

    def take(self, index) -> "FeatureFrame":
        return FeatureFrame(
            self.timestamp,
            self.ids[index],
            self.positions[index],
            self.descriptors[index],
        )


def apply_roi(frame: FeatureFrame, mask: FreeSpaceMask) -> FeatureFrame:
    """Keep exactly the features whose position maps to a free pixel."""
    if len(frame) == 0:
        return frame
    rows, cols = mask.metric_to_pixel(frame.positions)
    inside = mask.contains_pixel(rows, cols)
    keep = inside.copy()
    keep[inside] = mask.free[rows[inside], cols[inside]]
    return frame.take(keep)


@dataclass(frozen=True)
class FeatureMatches:
    """One-to-one matches; indices refer into the two frames' arrays."""

    current_idx: np.ndarray  # (K,) int64
    keyframe_idx: np.ndarray  # (K,) int64
    hamming: np.ndarray  # (K,) int64

    def __len__(self) -> int:
        return len(self.current_idx)

    @classmethod
    def empty(cls) -> "FeatureMatches":
        z = np.empty(0, np.int64)
        return cls(z, z.copy(), z.copy())


def direct_match(
    current: FeatureFrame,
    keyframe: FeatureFrame,
    predicted_pose: Pose2,
    radius: float = DEFAULT_MATCH_RADIUS_M,
    max_hamming: int = DEFAULT_MAX_HAMMING_BITS,
) -> FeatureMatches:
    """Match current features to keyframe features near their projections.

    Every current feature is projected into the keyframe frame by
    ``predicted_pose``; keyframe features within ``radius`` whose descriptor
    distance is at most ``max_hamming`` are candidates.  Assignment is
    greedy over all candidate pairs ordered by (hamming, current id,
    keyframe id), so the result is one-to-one and independent of input
    ordering.
    """
    if not radius > 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    if len(current) == 0 or len(keyframe) == 0:
        return FeatureMatches.empty()
    projected = transform_points(predicted_pose, current.positions)
    diff = projected[:, None, :] - keyframe.positions[None, :, :]
    d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]
    cand_i, cand_j = np.nonzero(d2 <= radius * radius)
    if len(cand_i) == 0:
        return FeatureMatches.empty()
    ham = accel.hamming_pairs(
        current.descriptors[cand_i], keyframe.descriptors[cand_j]
    )
    ok = ham <= max_hamming
    cand_i, cand_j, ham = cand_i[ok], cand_j[ok], ham[ok]
    if len(cand_i) == 0:
        return FeatureMatches.empty()
    rank = np.lexsort((keyframe.ids[cand_j], current.ids[cand_i], ham))
    used_cur = np.zeros(len(current), dtype=bool)
    used_kf = np.zeros(len(keyframe), dtype=bool)
    sel = []
    for k in rank:
        i, j = cand_i[k], cand_j[k]
        if used_cur[i] or used_kf[j]:
            continue
        used_cur[i] = True
        used_kf[j] = True
        sel.append(k)
    sel = np.array(sel, dtype=np.int64)
    return FeatureMatches(
        current_idx=cand_i[sel].astype(np.int64),
        keyframe_idx=cand_j[sel].astype(np.int64),
        hamming=ham[sel].astype(np.int64),
    )
