"""Deterministic synthetic parking-world generator.

Renders vehicle-centered free-space masks with occlusion shadows, emits
noisy ground-plane feature observations and wheel odometry along exact
car-like trajectories, and writes datasets in the on-disk format.  All
randomness flows through a counter-based generator keyed by
(seed, purpose, frame, entity), so frames can be produced independently
and the whole dataset is a pure function of its inputs.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import accel
from .dataset import Calib, write_calib, write_features_csv, write_pgm, write_pose_csv
from .features import FeatureFrame
from .geometry import OdomSample, Pose2, ackermann_predict, compose, inverse, relative
from .virtual_scan import (
    DEFAULT_IMAGE_SIZE_PX,
    DEFAULT_SCALE_M_PER_PX,
    FreeSpaceMask,
    VirtualScan,
    bin_count,
)

DEFAULT_LANDMARK_DENSITY_PER_M2 = 3.0

_PURPOSE_LANDMARKS = 1
_PURPOSE_DESCRIPTORS = 2
_PURPOSE_MASK = 3
_PURPOSE_FEATURES = 4
_PURPOSE_ODOMETRY = 5


def _stream(seed: int, purpose: int, a: int = 0, b: int = 0) -> np.random.Generator:
    """Counter-based generator; streams never collide for distinct keys."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(0)])
    counter = np.array(
        [np.uint64(0), np.uint64(b), np.uint64(a), np.uint64(purpose)]
    )
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _polygon_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _normalize_polygon(verts) -> np.ndarray:
    v = np.asarray(verts, dtype=float).reshape(-1, 2)
    if len(v) < 3:
        raise ValueError("obstacle polygons need at least 3 vertices")
    if _polygon_area(v) < 0.0:
        v = v[::-1].copy()
    # convexity: every CCW cross product non-negative
    nxt = np.roll(v, -1, axis=0)
    prv = np.roll(v, 1, axis=0)
    e1 = v - prv
    e2 = nxt - v
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if (cross < 0.0).any():
        raise ValueError("obstacle polygons must be convex")
    return v


def _points_in_polygon(points: np.ndarray, verts: np.ndarray) -> np.ndarray:
    inside = np.ones(len(points), dtype=bool)
    for e in range(len(verts)):
        v0 = verts[e]
        v1 = verts[(e + 1) % len(verts)]
        nx = v1[1] - v0[1]
        ny = -(v1[0] - v0[0])
        inside &= nx * (points[:, 0] - v0[0]) + ny * (points[:, 1] - v0[1]) <= 0.0
    return inside


@dataclass(frozen=True)
class World:
    """Rectangular world with convex obstacles and descriptor-tagged landmarks."""

    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    obstacles: tuple[np.ndarray, ...] = ()
    landmark_ids: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    landmark_positions: np.ndarray = field(
        default_factory=lambda: np.empty((0, 2), float)
    )
    landmark_descriptors: np.ndarray = field(
        default_factory=lambda: np.empty((0, 4), np.uint64)
    )

    def __post_init__(self) -> None:
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise ValueError(f"degenerate bounds {self.bounds}")
        polys = tuple(_normalize_polygon(p) for p in self.obstacles)
        object.__setattr__(self, "obstacles", polys)
        ids = np.asarray(self.landmark_ids, dtype=np.int64)
        pos = np.asarray(self.landmark_positions, dtype=float).reshape(-1, 2)
        desc = np.asarray(self.landmark_descriptors, dtype=np.uint64).reshape(-1, 4)
        if not (len(ids) == len(pos) == len(desc)):
            raise ValueError("landmark arrays must have equal length")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("landmark ids must be unique")
        if len(desc) and len(np.unique(desc, axis=0)) != len(desc):
            raise ValueError("landmark descriptors must be unique")
        for poly in polys:
            if len(pos) and _points_in_polygon(pos, poly).any():
                raise ValueError("landmarks must lie outside all obstacles")
        object.__setattr__(self, "landmark_ids", ids)
        object.__setattr__(self, "landmark_positions", pos)
        object.__setattr__(self, "landmark_descriptors", desc)

    @property
    def packed_obstacles(self) -> tuple[np.ndarray, np.ndarray]:
        if self.obstacles:
            verts = np.concatenate(self.obstacles, axis=0)
            offsets = np.cumsum([0] + [len(p) for p in self.obstacles])
        else:
            verts = np.empty((0, 2), float)
            offsets = np.zeros(1, np.int64)
        return np.ascontiguousarray(verts), np.asarray(offsets, np.int64)

    def contains(self, point) -> bool:
        x, y = float(point[0]), float(point[1])
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax

    def inside_obstacle(self, point) -> bool:
        p = np.asarray(point, dtype=float).reshape(1, 2)
        return any(_points_in_polygon(p, poly)[0] for poly in self.obstacles)


def random_descriptors(n: int, seed: int) -> np.ndarray:
    """n distinct random 256-bit descriptors."""
    rng = _stream(seed, _PURPOSE_DESCRIPTORS)
    desc = rng.integers(0, 2**64, size=(n, 4), dtype=np.uint64)
    while len(np.unique(desc, axis=0)) != n:  # astronomically unlikely
        desc = rng.integers(0, 2**64, size=(n, 4), dtype=np.uint64)
    return desc


def scatter_landmarks(
    bounds,
    obstacles,
    density: float = DEFAULT_LANDMARK_DENSITY_PER_M2,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Uniform landmarks over the free area at the given density."""
    xmin, ymin, xmax, ymax = bounds
    polys = [_normalize_polygon(p) for p in obstacles]
    free_area = (xmax - xmin) * (ymax - ymin) - sum(
        _polygon_area(p) for p in polys
    )
    n = max(int(round(density * free_area)), 0)
    rng = _stream(seed, _PURPOSE_LANDMARKS)
    positions = np.empty((0, 2))
    while len(positions) < n:
        batch = rng.uniform(
            [xmin, ymin], [xmax, ymax], size=(max(n, 64), 2)
        )
        ok = np.ones(len(batch), dtype=bool)
        for poly in polys:
            ok &= ~_points_in_polygon(batch, poly)
        positions = np.concatenate([positions, batch[ok]], axis=0)
    positions = positions[:n]
    return np.arange(n, dtype=np.int64), positions, random_descriptors(n, seed)


def build_world(
    bounds,
    obstacles=(),
    landmark_density: float = DEFAULT_LANDMARK_DENSITY_PER_M2,
    seed: int = 0,
) -> World:
    ids, pos, desc = scatter_landmarks(bounds, obstacles, landmark_density, seed)
    return World(
        bounds=tuple(float(v) for v in bounds),
        obstacles=tuple(obstacles),
        landmark_ids=ids,
        landmark_positions=pos,
        landmark_descriptors=desc,
    )


@dataclass(frozen=True)
class NoiseConfig:
    feature_sigma: float = 0.02
    mask_boundary_jitter: int = 1
    odom_translation_sigma: float = 0.01
    odom_rotation_sigma: float = 0.01
    descriptor_flip_bits: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in (
            "feature_sigma",
            "mask_boundary_jitter",
            "odom_translation_sigma",
            "odom_rotation_sigma",
            "descriptor_flip_bits",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def noiseless(cls, seed: int = 0) -> "NoiseConfig":
        return cls(0.0, 0, 0.0, 0.0, 0, seed)


@dataclass(frozen=True)
class TrajectorySpec:
    """Piecewise-constant controls: (duration s, speed m/s, steering rad)."""

    segments: tuple[tuple[float, float, float], ...]
    frame_rate: float = 10.0
    start: Pose2 = field(default_factory=Pose2)

    def __post_init__(self) -> None:
        if not self.frame_rate > 0.0:
            raise ValueError("frame_rate must be positive")
        segs = tuple(
            (float(d), float(v), float(s)) for d, v, s in self.segments
        )
        if any(d <= 0.0 for d, _, _ in segs):
            raise ValueError("segment durations must be positive")
        object.__setattr__(self, "segments", segs)


def _jitter_band(free: np.ndarray, width: int) -> np.ndarray:
    """Pixels within ``width`` (Chebyshev) of the free/obstacle boundary."""
    h, w = free.shape
    boundary = np.zeros_like(free)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            differs = np.zeros_like(free)
            differs[
                max(-dr, 0) : h + min(-dr, 0), max(-dc, 0) : w + min(-dc, 0)
            ] = (
                free[max(-dr, 0) : h + min(-dr, 0), max(-dc, 0) : w + min(-dc, 0)]
                != free[max(dr, 0) : h + min(dr, 0), max(dc, 0) : w + min(dc, 0)]
            )
            boundary |= differs
    band = boundary
    for _ in range(width - 1):
        grown = band.copy()
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr == 0 and dc == 0:
                    continue
                grown[
                    max(-dr, 0) : h + min(-dr, 0), max(-dc, 0) : w + min(-dc, 0)
                ] |= band[max(dr, 0) : h + min(dr, 0), max(dc, 0) : w + min(dc, 0)]
        band = grown
    return band


def render_mask(
    world: World,
    pose: Pose2,
    size_px: int = DEFAULT_IMAGE_SIZE_PX,
    scale: float = DEFAULT_SCALE_M_PER_PX,
    noise: NoiseConfig = NoiseConfig.noiseless(),
    frame_index: int = 0,
    occlusion: bool = True,
) -> FreeSpaceMask:
    """Per-pixel free-space mask seen from ``pose``, with occlusion shadows.

    A pixel is free when its world point is inside the bounds, outside every
    obstacle, and the ray from the vehicle origin reaches it first.  With a
    positive boundary jitter, pixels near the class boundary flip with
    probability 1/2 under the per-frame noise stream.
    """
    if not world.contains((pose.x, pose.y)):
        raise ValueError("vehicle pose outside world bounds")
    if world.inside_obstacle((pose.x, pose.y)):
        raise ValueError("vehicle pose inside an obstacle")
    verts, offsets = world.packed_obstacles
    free = accel.render_free(
        size_px,
        scale,
        pose.x,
        pose.y,
        pose.theta,
        verts,
        offsets,
        np.asarray(world.bounds, dtype=float),
        occlusion,
    )
    free = np.asarray(free, dtype=bool)
    if noise.mask_boundary_jitter > 0:
        band = _jitter_band(free, noise.mask_boundary_jitter)
        n_band = int(band.sum())
        if n_band:
            rng = _stream(noise.seed, _PURPOSE_MASK, frame_index)
            flips = rng.random(n_band) < 0.5
            flat = free.copy()
            idx = np.nonzero(band.ravel())[0]
            flat.ravel()[idx[flips]] ^= True
            free = flat
    return FreeSpaceMask(free, scale)


def observe_features(
    world: World,
    pose: Pose2,
    mask: FreeSpaceMask,
    noise: NoiseConfig = NoiseConfig.noiseless(),
    frame_index: int = 0,
    timestamp: float = 0.0,
) -> FeatureFrame:
    """Landmarks visible in the mask, with positional and descriptor noise.

    Noise is keyed per (seed, frame, landmark id), so an observation does not
    depend on which other landmarks are visible.  Features whose noisy
    position leaves the free area are dropped, which also hides landmarks
    occluded in the rendered mask.
    """
    if len(world.landmark_ids) == 0:
        return FeatureFrame.empty(timestamp)
    inv = inverse(pose)
    c, s = math.cos(inv.theta), math.sin(inv.theta)
    pts = world.landmark_positions
    veh = np.empty_like(pts)
    veh[:, 0] = c * pts[:, 0] - s * pts[:, 1] + inv.x
    veh[:, 1] = s * pts[:, 0] + c * pts[:, 1] + inv.y
    rows, cols = mask.metric_to_pixel(veh)
    in_image = mask.contains_pixel(rows, cols)
    ids = []
    positions = []
    descriptors = []
    for k in np.nonzero(in_image)[0]:
        lid = int(world.landmark_ids[k])
        rng = _stream(noise.seed, _PURPOSE_FEATURES, frame_index, lid)
        noisy = veh[k] + rng.normal(0.0, noise.feature_sigma, 2)
        desc = world.landmark_descriptors[k].copy()
        if noise.descriptor_flip_bits > 0:
            bits = rng.choice(256, size=noise.descriptor_flip_bits, replace=False)
            for bit in bits:
                desc[bit // 64] ^= np.uint64(1) << np.uint64(63 - (bit % 64))
        r, c_ = mask.metric_to_pixel(noisy[None, :])
        if not mask.contains_pixel(r, c_)[0] or not mask.free[r[0], c_[0]]:
            continue
        ids.append(lid)
        positions.append(noisy)
        descriptors.append(desc)
    if not ids:
        return FeatureFrame.empty(timestamp)
    return FeatureFrame(
        timestamp,
        np.array(ids, np.int64),
        np.array(positions, float),
        np.array(descriptors, np.uint64),
    )


def simulate_trajectory(
    spec: TrajectorySpec, wheelbase: float
) -> tuple[np.ndarray, list[Pose2]]:
    """Exact-arc ground-truth poses at 1/frame_rate spacing."""
    total = sum(d for d, _, _ in spec.segments)
    n_steps = int(math.floor(total * spec.frame_rate + 1e-9))
    timestamps = np.arange(n_steps + 1) / spec.frame_rate
    boundaries = np.cumsum([d for d, _, _ in spec.segments])
    poses = [spec.start]
    pose = spec.start
    for k in range(1, n_steps + 1):
        t0 = timestamps[k - 1]
        t1 = timestamps[k]
        t = t0
        while t < t1 - 1e-12:
            seg = int(np.searchsorted(boundaries, t + 1e-12, side="right"))
            seg = min(seg, len(spec.segments) - 1)
            seg_end = boundaries[seg]
            t_next = min(t1, seg_end)
            _, speed, steering = spec.segments[seg]
            pose = ackermann_predict(pose, speed, steering, wheelbase, t_next - t)
            t = t_next
        poses.append(pose)
    return timestamps, poses


def _ray_first_hit(origin, direction, verts, offsets, bounds) -> float:
    """Distance to the first obstacle or bounds wall along a unit ray."""
    ox, oy = origin
    dx, dy = direction
    best = math.inf
    xmin, ymin, xmax, ymax = bounds
    for lo_b, d, o in ((xmin, dx, ox), (xmax, dx, ox)):
        if d != 0.0:
            t = (lo_b - o) / d
            if t > 0.0:
                y = oy + t * dy
                if ymin - 1e-12 <= y <= ymax + 1e-12:
                    best = min(best, t)
    for lo_b, d, o in ((ymin, dy, oy), (ymax, dy, oy)):
        if d != 0.0:
            t = (lo_b - o) / d
            if t > 0.0:
                x = ox + t * dx
                if xmin - 1e-12 <= x <= xmax + 1e-12:
                    best = min(best, t)
    n_poly = len(offsets) - 1
    for p in range(n_poly):
        poly = verts[offsets[p] : offsets[p + 1]]
        t_lo, t_hi = -math.inf, math.inf
        feasible = True
        for e in range(len(poly)):
            v0 = poly[e]
            v1 = poly[(e + 1) % len(poly)]
            nx = v1[1] - v0[1]
            ny = -(v1[0] - v0[0])
            denom = nx * dx + ny * dy
            num = nx * (v0[0] - ox) + ny * (v0[1] - oy)
            if denom > 0.0:
                t_hi = min(t_hi, num / denom)
            elif denom < 0.0:
                t_lo = max(t_lo, num / denom)
            elif num < 0.0:
                feasible = False
        if feasible and t_lo <= t_hi and t_lo > 0.0:
            best = min(best, t_lo)
    return best


def analytic_scan(
    world: World,
    pose: Pose2,
    angle_increment: float = math.radians(1.0),
    max_range: float = 7.0,
) -> "VirtualScan":
    """Ideal virtual LiDAR: exact first-hit ranges at every bin center angle.

    This is what the mask-contour pipeline approximates; it doubles as the
    independent oracle for mask-derived scans (agreement within the pixel
    discretization bound) and as the exact sensor for noise-free tracking.
    """
    verts, offsets = world.packed_obstacles
    n_bins = bin_count(angle_increment)
    bins = []
    points = []
    ranges = []
    for b in range(n_bins):
        angle = -math.pi + (b + 0.5) * angle_increment
        c, s = math.cos(angle), math.sin(angle)
        # vehicle-frame direction rotated into the world
        cw, sw = math.cos(pose.theta), math.sin(pose.theta)
        direction = (cw * c - sw * s, sw * c + cw * s)
        t = _ray_first_hit((pose.x, pose.y), direction, verts, offsets, world.bounds)
        if t <= max_range:
            bins.append(b)
            points.append((t * c, t * s))
            ranges.append(t)
    return VirtualScan(
        angle_increment,
        np.array(bins, np.int64),
        np.array(points, float).reshape(-1, 2),
        np.array(ranges, float),
    )


def _segment_blocked(a, b, world: World) -> bool:
    """True when the open segment from a to b crosses an obstacle interior."""
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    for poly in world.obstacles:
        t_lo, t_hi = -math.inf, math.inf
        feasible = True
        for e in range(len(poly)):
            v0 = poly[e]
            v1 = poly[(e + 1) % len(poly)]
            nx = v1[1] - v0[1]
            ny = -(v1[0] - v0[0])
            denom = nx * dx + ny * dy
            num = nx * (v0[0] - ax) + ny * (v0[1] - ay)
            if denom > 0.0:
                t_hi = min(t_hi, num / denom)
            elif denom < 0.0:
                t_lo = max(t_lo, num / denom)
            elif num < 0.0:
                feasible = False
        if feasible and t_lo <= t_hi and 0.0 < t_lo < 1.0:
            return True
    return False


def observe_features_exact(
    world: World,
    pose: Pose2,
    half_extent_m: float,
    noise: NoiseConfig = NoiseConfig.noiseless(),
    frame_index: int = 0,
    timestamp: float = 0.0,
) -> FeatureFrame:
    """Landmark observations with analytic visibility instead of a mask ROI.

    A landmark is visible when its vehicle-frame position lies within the
    square footprint of side 2*half_extent_m and the sight line from the
    vehicle crosses no obstacle.  Positional and descriptor noise follow the
    same per-(seed, frame, id) streams as :func:`observe_features`.
    """
    if len(world.landmark_ids) == 0:
        return FeatureFrame.empty(timestamp)
    inv = inverse(pose)
    c, s = math.cos(inv.theta), math.sin(inv.theta)
    pts = world.landmark_positions
    veh = np.empty_like(pts)
    veh[:, 0] = c * pts[:, 0] - s * pts[:, 1] + inv.x
    veh[:, 1] = s * pts[:, 0] + c * pts[:, 1] + inv.y
    in_range = (np.abs(veh[:, 0]) <= half_extent_m) & (
        np.abs(veh[:, 1]) <= half_extent_m
    )
    ids = []
    positions = []
    descriptors = []
    for k in np.nonzero(in_range)[0]:
        if _segment_blocked((pose.x, pose.y), pts[k], world):
            continue
        lid = int(world.landmark_ids[k])
        rng = _stream(noise.seed, _PURPOSE_FEATURES, frame_index, lid)
        noisy = veh[k] + rng.normal(0.0, noise.feature_sigma, 2)
        desc = world.landmark_descriptors[k].copy()
        if noise.descriptor_flip_bits > 0:
            bits = rng.choice(256, size=noise.descriptor_flip_bits, replace=False)
            for bit in bits:
                desc[bit // 64] ^= np.uint64(1) << np.uint64(63 - (bit % 64))
        ids.append(lid)
        positions.append(noisy)
        descriptors.append(desc)
    if not ids:
        return FeatureFrame.empty(timestamp)
    return FeatureFrame(
        timestamp,
        np.array(ids, np.int64),
        np.array(positions, float),
        np.array(descriptors, np.uint64),
    )


def generate_dataset(
    world: World,
    spec: TrajectorySpec,
    noise: NoiseConfig,
    out_dir: str,
    size_px: int = DEFAULT_IMAGE_SIZE_PX,
    scale: float = DEFAULT_SCALE_M_PER_PX,
    wheelbase: float = 2.5,
    occlusion: bool = True,
) -> int:
    """Write a full dataset tree; returns the number of frames.

    Regeneration with identical inputs and seed is byte-identical;
    groundtruth.csv is independent of the noise seed.
    """
    timestamps, poses = simulate_trajectory(spec, wheelbase)
    odometry = corrupt_odometry(timestamps, poses, noise)
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "features"), exist_ok=True)
    write_calib(
        os.path.join(out_dir, "calib.txt"),
        Calib(scale, size_px, wheelbase, spec.frame_rate),
    )
    for k, (ts, pose) in enumerate(zip(timestamps, poses)):
        mask = render_mask(world, pose, size_px, scale, noise, k, occlusion)
        features = observe_features(world, pose, mask, noise, k, float(ts))
        write_pgm(os.path.join(out_dir, "masks", f"{k:06d}.pgm"), mask.free)
        write_features_csv(
            os.path.join(out_dir, "features", f"{k:06d}.csv"), features, mask
        )
    rows = [(k, float(ts), s.pose) for k, (ts, s) in enumerate(zip(timestamps, odometry))]
    write_pose_csv(os.path.join(out_dir, "odometry.csv"), rows)
    truth = [(k, float(ts), p) for k, (ts, p) in enumerate(zip(timestamps, poses))]
    write_pose_csv(os.path.join(out_dir, "groundtruth.csv"), truth)
    return len(poses)


def corrupt_odometry(
    timestamps: np.ndarray, poses: list[Pose2], noise: NoiseConfig = NoiseConfig()
) -> list[OdomSample]:
    """Wheel odometry with drift proportional to motion.

    Each per-step delta is scaled by (1 + systematic bias + white noise),
    both drawn from the seeded stream, so the expected final error grows
    like sigma times distance traveled.  Zero sigmas reproduce the truth
    and a stationary vehicle never drifts.
    """
    rng = _stream(noise.seed, _PURPOSE_ODOMETRY)
    bias_t = float(rng.normal(0.0, noise.odom_translation_sigma))
    bias_r = float(rng.normal(0.0, noise.odom_rotation_sigma))
    samples = [OdomSample(float(timestamps[0]), poses[0])]
    current = poses[0]
    for k in range(1, len(poses)):
        delta = relative(poses[k - 1], poses[k])
        eps_t = float(rng.normal(0.0, noise.odom_translation_sigma))
        eps_r = float(rng.normal(0.0, noise.odom_rotation_sigma))
        ft = 1.0 + bias_t + eps_t
        fr = 1.0 + bias_r + eps_r
        noisy = Pose2(delta.x * ft, delta.y * ft, delta.theta * fr)
        current = compose(current, noisy)
        samples.append(OdomSample(float(timestamps[k]), current))
    return samples
