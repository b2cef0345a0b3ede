"""Shared simulation harnesses for tracker-level and end-to-end tests."""

import math

from maskvo.geometry import Pose2
from maskvo.simulate import (
    NoiseConfig,
    TrajectorySpec,
    analytic_scan,
    build_world,
    corrupt_odometry,
    observe_features,
    observe_features_exact,
    render_mask,
    simulate_trajectory,
)
from maskvo.tracker import Frame

ROOM_BOUNDS = (-6.0, -6.0, 6.0, 6.0)
LOOP_SPEED = 0.6  # m/s, within the 0.30-0.68 envelope
LOOP_TURN_RADIUS = 1.5
LOOP_STRAIGHT = 2.5
LAP_LENGTH = 4 * LOOP_STRAIGHT + 2 * math.pi * LOOP_TURN_RADIUS  # ~19.4 m


def room_world(landmark_density=3.0, seed=5):
    """Empty convex room: visibility never changes, so exact sensors stay exact."""
    return build_world(ROOM_BOUNDS, [], landmark_density=landmark_density, seed=seed)


def room_loop_spec(laps=1, frame_rate=5.0, speed=LOOP_SPEED):
    steer = math.atan(2.5 / LOOP_TURN_RADIUS)
    arclen = math.pi / 2 * LOOP_TURN_RADIUS
    segs = []
    for _ in range(4 * laps):
        segs.append((LOOP_STRAIGHT / speed, speed, 0.0))
        segs.append((arclen / speed, speed, steer))
    return TrajectorySpec(
        segments=tuple(segs), frame_rate=frame_rate, start=Pose2(-1.25, -2.75, 0.0)
    )


def exact_frames(world, spec, wheelbase=2.5, max_range=7.0, seed=5):
    """Ideal-sensor frames (analytic scans, exact features, exact odometry)."""
    noise = NoiseConfig.noiseless(seed=seed)
    timestamps, poses = simulate_trajectory(spec, wheelbase)
    odometry = corrupt_odometry(timestamps, poses, noise)
    frames = []
    for k, (ts, pose) in enumerate(zip(timestamps, poses)):
        frames.append(
            Frame(
                index=k,
                timestamp=float(ts),
                scan=analytic_scan(world, pose, max_range=max_range),
                features=observe_features_exact(world, pose, max_range, noise, k, float(ts)),
                odom=odometry[k],
            )
        )
    return frames, poses


def mask_sensor_stream(world, spec, noise, wheelbase=2.5, size_px=384, scale=0.03984):
    """Per-frame (timestamp, pose, mask, features, odom) via the mask pipeline."""
    timestamps, poses = simulate_trajectory(spec, wheelbase)
    odometry = corrupt_odometry(timestamps, poses, noise)
    for k, (ts, pose) in enumerate(zip(timestamps, poses)):
        mask = render_mask(world, pose, size_px, scale, noise, k)
        features = observe_features(world, pose, mask, noise, k, float(ts))
        yield k, float(ts), pose, mask, features, odometry[k]
