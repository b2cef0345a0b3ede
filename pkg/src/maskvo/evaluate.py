"""Trajectory alignment and segment-wise relative-error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError
from .geometry import Pose2, relative, wrap_angle

DEFAULT_ALIGN_POSES = 100
DEFAULT_SEGMENT_LENGTHS = (4.0, 8.0, 16.0, 32.0)


@dataclass(frozen=True)
class Trajectory:
    timestamps: np.ndarray  # (N,)
    poses: np.ndarray  # (N, 3) x, y, theta

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=float)
        poses = np.asarray(self.poses, dtype=float).reshape(-1, 3)
        if len(ts) != len(poses):
            raise ValueError("timestamps and poses must have equal length")
        if len(ts) > 1 and not (np.diff(ts) > 0).all():
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "poses", poses)

    def __len__(self) -> int:
        return len(self.timestamps)

    def pose(self, k: int) -> Pose2:
        return Pose2(*self.poses[k])


@dataclass(frozen=True)
class AlignmentTransform:
    scale: float
    rotation: float
    translation: np.ndarray  # (2,)

    def apply(self, trajectory: Trajectory) -> Trajectory:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        xy = trajectory.poses[:, :2]
        out = np.empty_like(trajectory.poses)
        out[:, 0] = self.scale * (c * xy[:, 0] - s * xy[:, 1]) + self.translation[0]
        out[:, 1] = self.scale * (s * xy[:, 0] + c * xy[:, 1]) + self.translation[1]
        out[:, 2] = [wrap_angle(t + self.rotation) for t in trajectory.poses[:, 2]]
        return Trajectory(trajectory.timestamps.copy(), out)


def associate(estimate: Trajectory, reference: Trajectory):
    """Pair indices by nearest timestamp within half a reference frame period."""
    if len(estimate) == 0 or len(reference) == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    if len(reference) > 1:
        tol = 0.5 * float(np.median(np.diff(reference.timestamps)))
    else:
        tol = math.inf
    est_idx = []
    ref_idx = []
    last_e = -1
    for r, t in enumerate(reference.timestamps):
        e = int(np.searchsorted(estimate.timestamps, t))
        best = None
        for cand in (e - 1, e):
            if 0 <= cand < len(estimate):
                dt = abs(estimate.timestamps[cand] - t)
                if best is None or dt < best[1]:
                    best = (cand, dt)
        if best is not None and best[1] <= tol and best[0] > last_e:
            est_idx.append(best[0])
            ref_idx.append(r)
            last_e = best[0]
    return np.array(est_idx, np.int64), np.array(ref_idx, np.int64)


def align_trajectories(
    estimate: Trajectory,
    reference: Trajectory,
    n_poses: int = DEFAULT_ALIGN_POSES,
    with_scale: bool = False,
) -> tuple[Trajectory, AlignmentTransform]:
    """Closed-form 2D rigid (or similarity) fit over the first n_poses pairs.

    The fitted transform is applied to the whole estimate.  Raises
    :class:`EvaluationError` with fewer than two associated poses, or for a
    zero-variance point set when fitting scale.
    """
    ei, ri = associate(estimate, reference)
    if len(ei) < 2:
        raise EvaluationError("fewer than 2 associated poses")
    n = min(n_poses, len(ei))
    e = estimate.poses[ei[:n], :2]
    r = reference.poses[ri[:n], :2]
    mu_e = e.mean(axis=0)
    mu_r = r.mean(axis=0)
    ec = e - mu_e
    rc = r - mu_r
    dot = float((ec * rc).sum())
    cross = float((ec[:, 0] * rc[:, 1] - ec[:, 1] * rc[:, 0]).sum())
    var_e = float((ec * ec).sum())
    if var_e == 0.0:
        if with_scale:
            raise EvaluationError("zero-variance point set cannot fix scale")
        rotation = 0.0
        scale = 1.0
    else:
        rotation = math.atan2(cross, dot)
        scale = math.hypot(dot, cross) / var_e if with_scale else 1.0
    c, s = math.cos(rotation), math.sin(rotation)
    translation = mu_r - scale * np.array(
        [c * mu_e[0] - s * mu_e[1], s * mu_e[0] + c * mu_e[1]]
    )
    transform = AlignmentTransform(scale, rotation, translation)
    return transform.apply(estimate), transform


@dataclass(frozen=True)
class Summary:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float

    @classmethod
    def of(cls, values: np.ndarray) -> "Summary":
        v = np.asarray(values, dtype=float)
        return cls(
            float(v.min()),
            float(np.percentile(v, 25)),
            float(np.percentile(v, 50)),
            float(np.percentile(v, 75)),
            float(v.max()),
            float(v.mean()),
        )


@dataclass(frozen=True)
class RelativeErrorReport:
    """Per segment length: distribution of translation %% and rotation deg errors."""

    segment_lengths: tuple[float, ...]
    translation_percent: dict[float, Summary]
    rotation_deg: dict[float, Summary]


def relative_error(
    estimate: Trajectory,
    reference: Trajectory,
    segment_lengths=DEFAULT_SEGMENT_LENGTHS,
) -> RelativeErrorReport:
    """Segment-wise drift: start-aligned end-pose error over sub-trajectories.

    For every associated start index and length L, the end index is the
    first reference pose at least L meters of arc length ahead.  The
    estimate segment is aligned to the reference segment's start pose; the
    translation error is the end-position difference as a percent of L, the
    rotation error the absolute wrapped heading difference in degrees.
    Lengths the trajectory cannot cover produce empty entries.
    """
    ei, ri = associate(estimate, reference)
    trans: dict[float, Summary] = {}
    rot: dict[float, Summary] = {}
    lengths = tuple(float(v) for v in segment_lengths)
    if len(ei) < 2:
        return RelativeErrorReport(lengths, trans, rot)
    est = estimate.poses[ei]
    ref = reference.poses[ri]
    steps = np.linalg.norm(np.diff(ref[:, :2], axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    for length in lengths:
        t_errs = []
        r_errs = []
        ends = np.searchsorted(cum, cum + length, side="left")
        for si in range(len(ei)):
            eidx = ends[si]
            if eidx >= len(ei):
                break
            # aligning the estimate segment's start pose onto the reference
            # segment's start pose reduces to comparing the two relative
            # poses (the common start rotation preserves the error norm)
            d_est = relative(Pose2(*est[si]), Pose2(*est[eidx]))
            d_ref = relative(Pose2(*ref[si]), Pose2(*ref[eidx]))
            t_errs.append(
                math.hypot(d_est.x - d_ref.x, d_est.y - d_ref.y) / length * 100.0
            )
            r_errs.append(
                abs(math.degrees(wrap_angle(d_est.theta - d_ref.theta)))
            )
        if t_errs:
            trans[length] = Summary.of(np.array(t_errs))
            rot[length] = Summary.of(np.array(r_errs))
    return RelativeErrorReport(lengths, trans, rot)


def absolute_endpoint_error(
    estimate: Trajectory,
    reference: Trajectory,
    n_align: int = DEFAULT_ALIGN_POSES,
    with_scale: bool = False,
    align: bool = True,
) -> tuple[float, float]:
    """Final-pose translation (m) and rotation (deg) error after alignment."""
    if len(estimate) == 0 or len(reference) == 0:
        raise EvaluationError("empty trajectory")
    if align:
        estimate, _ = align_trajectories(estimate, reference, n_align, with_scale)
    ei, ri = associate(estimate, reference)
    if len(ei) == 0:
        raise EvaluationError("no associated poses")
    e = estimate.poses[ei[-1]]
    r = reference.poses[ri[-1]]
    return (
        math.hypot(e[0] - r[0], e[1] - r[1]),
        abs(math.degrees(wrap_angle(e[2] - r[2]))),
    )
