"""Planar rigid-body algebra and the car-like motion prediction model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Below this |tan(steering)| the arc integration degrades to a straight line,
# which removes the zero-steering singularity deterministically.
_STRAIGHT_TAN_EPS = 1e-9


def wrap_angle(theta: float) -> float:
    """Wrap an angle in radians to (-pi, pi]."""
    w = math.fmod(theta, TWO_PI)
    if w > math.pi:
        w -= TWO_PI
    elif w <= -math.pi:
        w += TWO_PI
    return w


def wrap_angle_array(theta: np.ndarray) -> np.ndarray:
    """Vectorized :func:`wrap_angle`."""
    w = np.fmod(np.asarray(theta, dtype=float), TWO_PI)
    w = np.where(w > math.pi, w - TWO_PI, w)
    w = np.where(w <= -math.pi, w + TWO_PI, w)
    return w


@dataclass(frozen=True)
class Pose2:
    """Planar rigid transform (x, y, heading); heading kept in (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass(frozen=True)
class OdomSample:
    """Integrated wheel-odometry pose at a given time, in a fixed odometry frame."""

    timestamp: float
    pose: Pose2


def compose(a: Pose2, b: Pose2) -> Pose2:
    """Return the transform applying ``b`` first, then ``a``."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.theta + b.theta,
    )


def inverse(a: Pose2) -> Pose2:
    """Return the transform with ``compose(a, inverse(a))`` equal to identity."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(-(c * a.x + s * a.y), s * a.x - c * a.y, -a.theta)


def relative(a: Pose2, b: Pose2) -> Pose2:
    """Pose of ``b`` expressed in the frame of ``a``: compose(a, result) == b."""
    return compose(inverse(a), b)


def transform_points(pose: Pose2, points: np.ndarray) -> np.ndarray:
    """Apply ``pose`` to one point ``(2,)`` or a batch ``(N, 2)``."""
    pts = np.asarray(points, dtype=float)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    x = pts[..., 0]
    y = pts[..., 1]
    out = np.empty_like(pts)
    out[..., 0] = c * x - s * y + pose.x
    out[..., 1] = s * x + c * y + pose.y
    return out


def transform_point(pose: Pose2, point) -> np.ndarray:
    """Single-point convenience wrapper around :func:`transform_points`."""
    return transform_points(pose, np.asarray(point, dtype=float))


def ackermann_predict(
    start: Pose2, speed: float, steering: float, wheelbase: float, dt: float
) -> Pose2:
    """Integrate car-like motion exactly along a constant-curvature arc.

    ``steering`` is the front-wheel angle; the turn radius is
    ``wheelbase / tan(steering)``.  Zero steering degenerates to straight-line
    motion without a division by zero.
    """
    if wheelbase <= 0.0:
        raise ValueError(f"wheelbase must be positive, got {wheelbase}")
    if dt < 0.0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    arc = speed * dt
    tan_steer = math.tan(steering)
    if abs(tan_steer) < _STRAIGHT_TAN_EPS:
        dx, dy, dtheta = arc, 0.0, 0.0
    else:
        radius = wheelbase / tan_steer
        dtheta = arc / radius
        dx = radius * math.sin(dtheta)
        dy = radius * (1.0 - math.cos(dtheta))
    return compose(start, Pose2(dx, dy, dtheta))
