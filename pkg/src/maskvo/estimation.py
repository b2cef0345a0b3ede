"""Robust outlier rejection and the fused relative-pose solver.

The solver minimizes the sum of robustified squared reprojection residuals
of feature pairs and scan pairs over a single SE(2) transform:

    sum_i w_f * rho(||ref_i - T cur_i||^2) + sum_j w_s * rho(||ref_j - T cur_j||^2)

with the Cauchy kernel rho(s) = c^2 * ln(1 + s / c^2), solved by
iteratively reweighted Gauss-Newton with Levenberg damping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSampleError, EstimationError, RansacError
from .geometry import Pose2, transform_points

_LM_INITIAL_DAMPING = 1e-4
_LM_STEP_TOL = 1e-9
_LM_MAX_ITERATIONS = 100


def cauchy_rho(s, scale_c: float):
    """Cauchy robust kernel applied to a squared residual norm."""
    c2 = scale_c * scale_c
    return c2 * np.log1p(np.asarray(s, dtype=float) / c2)


def cauchy_weight(s, scale_c: float):
    """d rho / d s, the IRLS weight of a squared residual."""
    c2 = scale_c * scale_c
    return 1.0 / (1.0 + np.asarray(s, dtype=float) / c2)


@dataclass(frozen=True)
class CauchyLoss:
    scale_c: float = 0.5

    def __post_init__(self) -> None:
        if not self.scale_c > 0.0:
            raise ValueError("scale_c must be positive")

    def rho(self, s):
        return cauchy_rho(s, self.scale_c)

    def weight(self, s):
        return cauchy_weight(s, self.scale_c)


@dataclass(frozen=True)
class FusionWeights:
    w_feature: float = 1.0
    w_scan: float = 0.1

    def __post_init__(self) -> None:
        if self.w_feature < 0.0 or self.w_scan < 0.0:
            raise ValueError("weights must be non-negative")
        if self.w_feature == 0.0 and self.w_scan == 0.0:
            raise ValueError("at least one weight must be positive")


@dataclass(frozen=True)
class RansacParams:
    inlier_threshold: float = 0.05
    max_iterations: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.inlier_threshold > 0.0:
            raise ValueError("inlier_threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


def fit_se2_minimal(src: np.ndarray, dst: np.ndarray) -> Pose2:
    """Rigid transform from two point pairs.

    Rotation comes from the direction change of the chord between the two
    source points, translation from the centroids; this is exact whenever an
    exact transform exists and the two-pair least-squares fit otherwise.
    """
    src = np.asarray(src, dtype=float).reshape(2, 2)
    dst = np.asarray(dst, dtype=float).reshape(2, 2)
    ds = src[1] - src[0]
    if float(ds @ ds) < 1e-18:
        raise DegenerateSampleError("coincident source points")
    dd = dst[1] - dst[0]
    theta = math.atan2(ds[0] * dd[1] - ds[1] * dd[0], ds[0] * dd[0] + ds[1] * dd[1])
    c, s = math.cos(theta), math.sin(theta)
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    return Pose2(
        cd[0] - (c * cs[0] - s * cs[1]),
        cd[1] - (s * cs[0] + c * cs[1]),
        theta,
    )


def ransac_se2(
    src: np.ndarray, dst: np.ndarray, params: RansacParams = RansacParams()
) -> tuple[np.ndarray, Pose2]:
    """Seeded RANSAC over 2D point pairs with 2-sample rigid hypotheses.

    Inliers map within ``inlier_threshold`` of their targets; the best model
    has the most inliers, ties broken by lower mean inlier residual, then by
    hypothesis order.  All hypotheses are drawn and scored in one vectorized
    pass.  Raises :class:`EstimationError` for fewer than 2 pairs and
    :class:`RansacError` when no hypothesis reaches 3 inliers.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    n = len(src)
    if n < 2 or len(dst) != n:
        raise EstimationError(f"need at least 2 correspondences, got {n}")
    rng = np.random.default_rng(params.seed)
    its = params.max_iterations
    i = rng.integers(0, n, its)
    j = rng.integers(0, n - 1, its)
    j = j + (j >= i)
    ds = src[j] - src[i]
    dd = dst[j] - dst[i]
    usable = (ds * ds).sum(axis=1) >= 1e-18  # skip coincident source samples
    theta = np.arctan2(
        ds[:, 0] * dd[:, 1] - ds[:, 1] * dd[:, 0],
        ds[:, 0] * dd[:, 0] + ds[:, 1] * dd[:, 1],
    )
    c = np.cos(theta)
    s = np.sin(theta)
    cs = 0.5 * (src[i] + src[j])
    cd = 0.5 * (dst[i] + dst[j])
    tx = cd[:, 0] - (c * cs[:, 0] - s * cs[:, 1])
    ty = cd[:, 1] - (s * cs[:, 0] + c * cs[:, 1])
    rx = (
        c[:, None] * src[None, :, 0]
        - s[:, None] * src[None, :, 1]
        + tx[:, None]
        - dst[None, :, 0]
    )
    ry = (
        s[:, None] * src[None, :, 0]
        + c[:, None] * src[None, :, 1]
        + ty[:, None]
        - dst[None, :, 1]
    )
    resid = np.sqrt(rx * rx + ry * ry)
    inliers = resid <= params.inlier_threshold
    counts = inliers.sum(axis=1)
    counts[~usable] = 0
    valid = counts >= 3
    if not valid.any():
        raise RansacError("no hypothesis with at least 3 inliers")
    sums = (resid * inliers).sum(axis=1)
    means = np.where(valid, sums / np.maximum(counts, 1), math.inf)
    ranked = np.lexsort((np.arange(its), means, -counts))
    best = int(ranked[0])
    best_pose = Pose2(tx[best], ty[best], theta[best])
    return inliers[best], best_pose


@dataclass(frozen=True)
class EstimateResult:
    pose: Pose2
    cost: float
    cost_trace: tuple[float, ...] = field(default=())
    iterations: int = 0


def _residual_terms(cur, ref, pose):
    r = ref - transform_points(pose, cur)
    s = r[:, 0] * r[:, 0] + r[:, 1] * r[:, 1]
    return r, s


def relative_pose_cost(
    feature_cur, feature_ref, scan_cur, scan_ref, pose, weights, loss
) -> float:
    """Objective value of the fused robust least squares at ``pose``."""
    feature_cur = np.asarray(feature_cur, dtype=float).reshape(-1, 2)
    feature_ref = np.asarray(feature_ref, dtype=float).reshape(-1, 2)
    scan_cur = np.asarray(scan_cur, dtype=float).reshape(-1, 2)
    scan_ref = np.asarray(scan_ref, dtype=float).reshape(-1, 2)
    total = 0.0
    if weights.w_feature > 0.0 and len(feature_cur):
        _, s = _residual_terms(feature_cur, feature_ref, pose)
        total += weights.w_feature * float(loss.rho(s).sum())
    if weights.w_scan > 0.0 and len(scan_cur):
        _, s = _residual_terms(scan_cur, scan_ref, pose)
        total += weights.w_scan * float(loss.rho(s).sum())
    return total


def relative_pose_gradient(
    feature_cur, feature_ref, scan_cur, scan_ref, pose, weights, loss
) -> np.ndarray:
    """Analytic gradient of the objective with respect to (x, y, theta)."""
    grad = np.zeros(3)
    c, s_ = math.cos(pose.theta), math.sin(pose.theta)
    for cur, ref, w in (
        (feature_cur, feature_ref, weights.w_feature),
        (scan_cur, scan_ref, weights.w_scan),
    ):
        cur = np.asarray(cur, dtype=float).reshape(-1, 2)
        ref = np.asarray(ref, dtype=float).reshape(-1, 2)
        if w == 0.0 or len(cur) == 0:
            continue
        r, s = _residual_terms(cur, ref, pose)
        omega = w * loss.weight(s)
        dq = np.stack(
            [-s_ * cur[:, 0] - c * cur[:, 1], c * cur[:, 0] - s_ * cur[:, 1]], axis=1
        )
        # d r / d (x, y) = -I, d r / d theta = -R'(theta) q
        grad[0] += -2.0 * float((omega * r[:, 0]).sum())
        grad[1] += -2.0 * float((omega * r[:, 1]).sum())
        grad[2] += -2.0 * float((omega * (r * dq).sum(axis=1)).sum())
    return grad


def _normal_equations(cur, ref, pose, omega):
    """Accumulate H and g of the IRLS Gauss-Newton system for one term."""
    r, _ = _residual_terms(cur, ref, pose)
    c, s_ = math.cos(pose.theta), math.sin(pose.theta)
    dq = np.stack(
        [-s_ * cur[:, 0] - c * cur[:, 1], c * cur[:, 0] - s_ * cur[:, 1]], axis=1
    )
    # J_i = -[I | R'(theta) q_i] (2x3); fold the minus into both H and g
    h = np.zeros((3, 3))
    a = (omega * dq[:, 0]).sum()
    b = (omega * dq[:, 1]).sum()
    h[0, 0] = omega.sum()
    h[1, 1] = h[0, 0]
    h[0, 2] = a
    h[2, 0] = a
    h[1, 2] = b
    h[2, 1] = b
    h[2, 2] = (omega * (dq * dq).sum(axis=1)).sum()
    g = np.array(
        [
            -(omega * r[:, 0]).sum(),
            -(omega * r[:, 1]).sum(),
            -(omega * (r * dq).sum(axis=1)).sum(),
        ]
    )
    return h, g


def estimate_relative_pose(
    feature_cur,
    feature_ref,
    scan_cur,
    scan_ref,
    initial: Pose2 = Pose2(),
    weights: FusionWeights = FusionWeights(),
    loss: CauchyLoss = CauchyLoss(),
) -> EstimateResult:
    """Minimize the fused robust objective over a single relative pose.

    A zero weight disables its term entirely, so results are bit-identical
    to passing that term's correspondences as empty arrays.  Raises
    :class:`EstimationError` when fewer than two correspondences remain or
    the normal equations are rank deficient.
    """
    feature_cur = np.asarray(feature_cur, dtype=float).reshape(-1, 2)
    feature_ref = np.asarray(feature_ref, dtype=float).reshape(-1, 2)
    scan_cur = np.asarray(scan_cur, dtype=float).reshape(-1, 2)
    scan_ref = np.asarray(scan_ref, dtype=float).reshape(-1, 2)
    if weights.w_feature == 0.0:
        feature_cur = feature_cur[:0]
        feature_ref = feature_ref[:0]
    if weights.w_scan == 0.0:
        scan_cur = scan_cur[:0]
        scan_ref = scan_ref[:0]
    if len(feature_cur) != len(feature_ref) or len(scan_cur) != len(scan_ref):
        raise ValueError("correspondence arrays must pair up")
    if len(feature_cur) + len(scan_cur) < 2:
        raise EstimationError("need at least 2 active correspondences")

    def cost_at(pose: Pose2) -> float:
        return relative_pose_cost(
            feature_cur, feature_ref, scan_cur, scan_ref, pose, weights, loss
        )

    pose = initial
    cost = cost_at(pose)
    trace = [cost]
    damping = _LM_INITIAL_DAMPING
    iterations = 0
    for iterations in range(1, _LM_MAX_ITERATIONS + 1):
        h = np.zeros((3, 3))
        g = np.zeros(3)
        for cur, ref, w in (
            (feature_cur, feature_ref, weights.w_feature),
            (scan_cur, scan_ref, weights.w_scan),
        ):
            if len(cur) == 0:
                continue
            _, s = _residual_terms(cur, ref, pose)
            omega = w * loss.weight(s)
            ht, gt = _normal_equations(cur, ref, pose, omega)
            h += ht
            g += gt
        if iterations == 1 and np.linalg.matrix_rank(h) < 3:
            # structurally unobservable (e.g. all points coincident); the
            # damped solve would silently return the initial guess
            raise EstimationError("rank-deficient normal equations")
        try:
            step = np.linalg.solve(h + damping * np.eye(3), -g)
        except np.linalg.LinAlgError as exc:
            raise EstimationError("rank-deficient normal equations") from exc
        if not np.isfinite(step).all():
            raise EstimationError("non-finite update step")
        candidate = Pose2(pose.x + step[0], pose.y + step[1], pose.theta + step[2])
        new_cost = cost_at(candidate)
        if new_cost <= cost:
            pose = candidate
            cost = new_cost
            trace.append(cost)
            damping = max(damping / 10.0, 1e-12)
            if float(np.linalg.norm(step)) < _LM_STEP_TOL:
                break
        else:
            damping *= 10.0
    return EstimateResult(
        pose=pose, cost=cost, cost_trace=tuple(trace), iterations=iterations
    )
