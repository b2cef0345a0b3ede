"""Point-to-line ICP between two virtual scans.

Estimates the reference-from-current rigid transform and emits the final
point correspondences (current point, projection foot on the matched
reference segment) for the downstream fused solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import accel
from .errors import ScanMatchError
from .geometry import Pose2, transform_points
from .virtual_scan import VirtualScan

# Segments shorter than this fall back to point-to-point matching.
_DEGENERATE_SEGMENT_SQ = 1e-24


@dataclass(frozen=True)
class ScanMatchParams:
    max_iterations: int = 50
    convergence_eps: float = 1e-6
    max_correspondence_dist: float = 1.0
    trim_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 <= self.trim_fraction < 1.0:
            raise ValueError("trim_fraction must be in [0, 1)")
        if not self.convergence_eps > 0.0:
            raise ValueError("convergence_eps must be positive")
        if not self.max_correspondence_dist > 0.0:
            raise ValueError("max_correspondence_dist must be positive")


@dataclass(frozen=True)
class ScanCorrespondences:
    """Matched pairs: current-frame scan points and reference-frame feet."""

    current: np.ndarray  # (K, 2) current-frame coordinates
    reference: np.ndarray  # (K, 2) projection feet in the reference frame

    def __len__(self) -> int:
        return len(self.current)


@dataclass(frozen=True)
class ScanMatchResult:
    pose: Pose2  # reference-from-current
    correspondences: ScanCorrespondences
    converged: bool
    mean_residual: float
    iterations: int


def point_to_line_residual(p, a, b) -> tuple[float, np.ndarray]:
    """Perpendicular distance from p to the line through a, b and the foot.

    Coincident a, b (within 1e-12) fall back to the point-to-point distance
    with foot a.
    """
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    len_sq = float(d @ d)
    if len_sq < _DEGENERATE_SEGMENT_SQ:
        foot = a
    else:
        t = float((p - a) @ d) / len_sq
        foot = a + t * d
    return float(np.hypot(*(p - foot))), foot


def _correspondences(points, refs, pose, max_dist):
    """Match every transformed point against its local reference segment.

    Returns (feet, normals, signed, dist, valid): projection feet in the
    reference frame, unit segment perpendiculars, signed point-to-line
    residuals along them, unsigned distances, and the gate mask.  A
    degenerate segment (coincident nearest points) falls back to the
    point-to-point direction.
    """
    tp = transform_points(pose, points)
    i1, i2 = accel.nearest_two(tp, refs)
    a = refs[i1]
    d = refs[i2] - a
    len_sq = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]
    degenerate = len_sq < _DEGENERATE_SEGMENT_SQ
    safe = np.where(degenerate, 1.0, len_sq)
    t = np.where(
        degenerate,
        0.0,
        ((tp[:, 0] - a[:, 0]) * d[:, 0] + (tp[:, 1] - a[:, 1]) * d[:, 1]) / safe,
    )
    feet = a + t[:, None] * d
    resid = tp - feet
    dist = np.sqrt(resid[:, 0] * resid[:, 0] + resid[:, 1] * resid[:, 1])
    normals = np.empty_like(resid)
    normals[:, 0] = -d[:, 1]
    normals[:, 1] = d[:, 0]
    normals /= np.sqrt(safe)[:, None]
    # degenerate segment: point-to-point direction (or no constraint at 0)
    deg_idx = np.nonzero(degenerate)[0]
    if len(deg_idx):
        normals[deg_idx] = 0.0
        pos = deg_idx[dist[deg_idx] > 0.0]
        normals[pos] = resid[pos] / dist[pos, None]
    signed = (resid * normals).sum(axis=1)
    valid = dist <= max_dist
    return feet, normals, signed, dist, valid


def _solve_update(q, normals, signed, pose) -> np.ndarray:
    """One Gauss-Newton step of the linearized point-to-line least squares."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    dq = np.stack([-s * q[:, 0] - c * q[:, 1], c * q[:, 0] - s * q[:, 1]], axis=1)
    jac = np.column_stack([normals[:, 0], normals[:, 1], (normals * dq).sum(axis=1)])
    h = jac.T @ jac
    g = jac.T @ signed
    try:
        return np.linalg.solve(h, -g)
    except np.linalg.LinAlgError as exc:
        raise ScanMatchError("degenerate scan geometry") from exc


def match_scans(
    current: VirtualScan,
    reference: VirtualScan,
    initial_guess: Pose2 = Pose2(),
    params: ScanMatchParams = ScanMatchParams(),
) -> ScanMatchResult:
    """Iteratively align ``current`` to ``reference`` with a point-to-line metric.

    Each iteration matches every transformed current point against the
    segment of its two nearest reference points, gates matches by distance,
    trims the worst ``trim_fraction``, and solves the linearized SE(2)
    update.  Raises :class:`ScanMatchError` on empty scans, fewer than three
    surviving correspondences, or degenerate geometry.
    """
    if len(current) == 0 or len(reference) == 0:
        raise ScanMatchError("cannot match empty scans")
    points = np.asarray(current.points, dtype=float)
    refs = np.asarray(reference.points, dtype=float)
    pose = initial_guess
    converged = False
    iterations = 0
    for iterations in range(1, params.max_iterations + 1):
        feet, normals, signed, dist, valid = _correspondences(
            points, refs, pose, params.max_correspondence_dist
        )
        idx = np.nonzero(valid)[0]
        if len(idx) < 3:
            raise ScanMatchError(
                f"only {len(idx)} correspondences within "
                f"{params.max_correspondence_dist} m"
            )
        n_keep = len(idx) - int(math.floor(params.trim_fraction * len(idx)))
        keep = idx[np.argsort(dist[idx], kind="stable")[:n_keep]]
        if len(keep) < 3:
            raise ScanMatchError("fewer than 3 correspondences after trimming")
        step = _solve_update(points[keep], normals[keep], signed[keep], pose)
        pose = Pose2(pose.x + step[0], pose.y + step[1], pose.theta + step[2])
        if float(np.linalg.norm(step)) < params.convergence_eps:
            converged = True
            break
    feet, _, _, dist, valid = _correspondences(
        points, refs, pose, params.max_correspondence_dist
    )
    idx = np.nonzero(valid)[0]
    if len(idx) == 0:
        raise ScanMatchError("no correspondences at the final pose")
    n_keep = len(idx) - int(math.floor(params.trim_fraction * len(idx)))
    keep = idx[np.argsort(dist[idx], kind="stable")[:n_keep]]
    keep = np.sort(keep)
    corr = ScanCorrespondences(
        current=points[keep].copy(), reference=feet[keep].copy()
    )
    return ScanMatchResult(
        pose=pose,
        correspondences=corr,
        converged=converged,
        mean_residual=float(dist[keep].mean()),
        iterations=iterations,
    )
