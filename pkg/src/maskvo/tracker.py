"""Keyframe odometry: per-frame relative pose, keyframe selection, local BA.

Every frame is matched against the current keyframe with features and/or
scans depending on the mode, fused in the robust solver, and checked
against wheel odometry; on any failure the odometry delta takes over, so a
pose is emitted for every input frame.  Keyframes advance on spatial or
temporal thresholds, closing a window that is jointly refined by bundle
adjustment over the window poses and the keyframe feature points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateMaskError, EstimationError, ScanMatchError
from .estimation import (
    CauchyLoss,
    FusionWeights,
    RansacParams,
    cauchy_rho,
    cauchy_weight,
    estimate_relative_pose,
    ransac_se2,
)
from .features import (
    DEFAULT_MATCH_RADIUS_M,
    DEFAULT_MAX_HAMMING_BITS,
    FeatureFrame,
    apply_roi,
    direct_match,
)
from .geometry import (
    OdomSample,
    Pose2,
    compose,
    relative,
    wrap_angle,
    wrap_angle_array,
)
from .scan_match import ScanMatchParams, match_scans
from .virtual_scan import FreeSpaceMask, ScanParams, VirtualScan, make_scan

MODE_SCAN_ONLY = "scan_only"
MODE_FEATURE_ONLY = "feature_only"
MODE_SCAN_FEATURE = "scan_feature"
MODES = (MODE_SCAN_ONLY, MODE_FEATURE_ONLY, MODE_SCAN_FEATURE)

STATUS_VO = "vo"
STATUS_FALLBACK = "odometry_fallback"
STATUS_KEYFRAME = "new_keyframe"

_BA_STEP_TOL = 1e-9
_BA_MAX_ITERATIONS = 100
_BA_INITIAL_DAMPING = 1e-4


@dataclass(frozen=True)
class TrackerConfig:
    mode: str = MODE_SCAN_FEATURE
    kf_translation: float = 1.5
    kf_rotation: float = 0.6
    kf_time: float = 3.0
    fallback_translation: float = 0.2
    fallback_rotation: float = 0.1
    weights: FusionWeights = FusionWeights()
    loss: CauchyLoss = CauchyLoss()
    scan_params: ScanParams = ScanParams()
    match_params: ScanMatchParams = ScanMatchParams()
    match_radius: float = DEFAULT_MATCH_RADIUS_M
    max_hamming: int = DEFAULT_MAX_HAMMING_BITS
    feature_ransac: RansacParams = RansacParams(inlier_threshold=0.05)
    scan_ransac: RansacParams = RansacParams(inlier_threshold=0.10)
    wheelbase: float = 2.5
    max_window: int = 120

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in (
            "kf_translation",
            "kf_rotation",
            "kf_time",
            "fallback_translation",
            "fallback_rotation",
            "match_radius",
            "wheelbase",
        ):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.max_window < 1:
            raise ValueError("max_window must be >= 1")
        if self.mode == MODE_SCAN_ONLY and self.weights.w_scan == 0.0:
            raise ValueError("scan_only mode requires a positive scan weight")
        if self.mode == MODE_FEATURE_ONLY and self.weights.w_feature == 0.0:
            raise ValueError("feature_only mode requires a positive feature weight")

    @property
    def use_features(self) -> bool:
        return self.mode in (MODE_FEATURE_ONLY, MODE_SCAN_FEATURE)

    @property
    def use_scans(self) -> bool:
        return self.mode in (MODE_SCAN_ONLY, MODE_SCAN_FEATURE)


@dataclass
class Frame:
    """One tracked frame together with its keyframe correspondences."""

    index: int
    timestamp: float
    scan: VirtualScan
    features: FeatureFrame
    odom: OdomSample
    pose_in_keyframe: Pose2 = field(default_factory=Pose2)
    # inlier observations against the keyframe, recorded at tracking time
    feat_obs_idx: np.ndarray = field(
        default_factory=lambda: np.empty(0, np.int64)
    )  # indices into the keyframe point set
    feat_obs_cur: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    scan_obs_cur: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    scan_obs_ref: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))


@dataclass
class Keyframe:
    frame: Frame
    world_pose: Pose2
    feature_points: np.ndarray  # (M, 2) optimizable keyframe feature positions


@dataclass(frozen=True)
class TrackerOutput:
    index: int
    timestamp: float
    world_pose: Pose2
    status: str
    n_features: int = 0
    n_feature_matches: int = 0
    n_feature_inliers: int = 0
    n_scan_points: int = 0
    n_scan_matches: int = 0
    n_scan_inliers: int = 0
    cost: float = math.nan
    ba_initial_cost: float = math.nan
    ba_final_cost: float = math.nan


def predict_motion(
    prev_frame: Frame, current_odom: OdomSample, prev_odom: OdomSample
) -> Pose2:
    """Keyframe-relative pose prior from the wheel-odometry delta."""
    delta = relative(prev_odom.pose, current_odom.pose)
    return compose(prev_frame.pose_in_keyframe, delta)


def should_create_keyframe(
    relative_pose: Pose2, elapsed: float, odom_delta: Pose2, config: TrackerConfig
) -> bool:
    """Spatial or temporal keyframe trigger, also driven by raw odometry."""

    def spatial(p: Pose2) -> bool:
        return (
            math.hypot(p.x, p.y) > config.kf_translation
            or abs(p.theta) > config.kf_rotation
        )

    return spatial(relative_pose) or elapsed > config.kf_time or spatial(odom_delta)


@dataclass(frozen=True)
class BAResult:
    poses: list[Pose2]
    points: np.ndarray
    cost_trace: tuple[float, ...]


def _ba_cost(poses_arr, points, fk, fi, fcur, sk, scur, sref, weights, loss):
    total = 0.0
    c = np.cos(poses_arr[:, 2])
    s = np.sin(poses_arr[:, 2])
    if len(fk):
        rx = points[fi, 0] - (
            c[fk] * fcur[:, 0] - s[fk] * fcur[:, 1] + poses_arr[fk, 0]
        )
        ry = points[fi, 1] - (
            s[fk] * fcur[:, 0] + c[fk] * fcur[:, 1] + poses_arr[fk, 1]
        )
        total += weights.w_feature * float(
            cauchy_rho(rx * rx + ry * ry, loss.scale_c).sum()
        )
    if len(sk):
        rx = sref[:, 0] - (c[sk] * scur[:, 0] - s[sk] * scur[:, 1] + poses_arr[sk, 0])
        ry = sref[:, 1] - (s[sk] * scur[:, 0] + c[sk] * scur[:, 1] + poses_arr[sk, 1])
        total += weights.w_scan * float(
            cauchy_rho(rx * rx + ry * ry, loss.scale_c).sum()
        )
    return total


def local_bundle_adjustment(
    window: list[Frame],
    keyframe: Keyframe,
    weights: FusionWeights = FusionWeights(),
    loss: CauchyLoss = CauchyLoss(),
) -> BAResult:
    """Jointly refine window poses and keyframe feature points.

    The keyframe itself is the gauge (its pose is not a parameter); scan
    points enter residuals only through the frame poses.  Feature points
    observed by no frame stay frozen.  Levenberg-damped IRLS, with the
    feature-point block eliminated by its Schur complement.
    """
    if not window:
        raise ValueError("window must contain at least one frame")
    n_frames = len(window)
    points = np.array(keyframe.feature_points, dtype=float).reshape(-1, 2)
    poses = np.array(
        [f.pose_in_keyframe.as_array() for f in window], dtype=float
    )

    use_features = weights.w_feature > 0.0
    use_scans = weights.w_scan > 0.0
    if use_features:
        fk = np.concatenate(
            [np.full(len(f.feat_obs_idx), k, np.int64) for k, f in enumerate(window)]
        )
        fi = np.concatenate([f.feat_obs_idx for f in window]).astype(np.int64)
        fcur = np.concatenate([f.feat_obs_cur.reshape(-1, 2) for f in window])
    else:
        fk = np.empty(0, np.int64)
        fi = np.empty(0, np.int64)
        fcur = np.empty((0, 2))
    if use_scans:
        sk = np.concatenate(
            [np.full(len(f.scan_obs_cur), k, np.int64) for k, f in enumerate(window)]
        )
        scur = np.concatenate([f.scan_obs_cur.reshape(-1, 2) for f in window])
        sref = np.concatenate([f.scan_obs_ref.reshape(-1, 2) for f in window])
    else:
        sk = np.empty(0, np.int64)
        scur = np.empty((0, 2))
        sref = np.empty((0, 2))

    if len(fk) == 0 and len(sk) == 0:
        return BAResult(
            poses=[f.pose_in_keyframe for f in window],
            points=points,
            cost_trace=(0.0,),
        )

    # only observed feature points are parameters; the rest stay frozen
    obs_points, fi_local = np.unique(fi, return_inverse=True)
    m_obs = len(obs_points)

    def cost_at(poses_arr, pts):
        return _ba_cost(poses_arr, pts, fk, fi, fcur, sk, scur, sref, weights, loss)

    cost = cost_at(poses, points)
    trace = [cost]
    damping = _BA_INITIAL_DAMPING
    c2 = loss.scale_c
    for _ in range(_BA_MAX_ITERATIONS):
        c = np.cos(poses[:, 2])
        s = np.sin(poses[:, 2])
        h_tt = np.zeros((n_frames, 3, 3))
        g_t = np.zeros((n_frames, 3))
        h_pp = np.zeros(m_obs)
        g_p = np.zeros((m_obs, 2))
        w_tp = np.zeros((n_frames, m_obs, 3, 2))

        def bsum(idx, values, length):
            return np.bincount(idx, weights=values, minlength=length)

        def accumulate(k_idx, cur, ref, w, point_idx=None):
            ck, sk_ = c[k_idx], s[k_idx]
            tx = cur[:, 0] * ck - cur[:, 1] * sk_ + poses[k_idx, 0]
            ty = cur[:, 0] * sk_ + cur[:, 1] * ck + poses[k_idx, 1]
            rx = ref[:, 0] - tx
            ry = ref[:, 1] - ty
            omega = w * cauchy_weight(rx * rx + ry * ry, c2)
            dqx = -sk_ * cur[:, 0] - ck * cur[:, 1]
            dqy = ck * cur[:, 0] - sk_ * cur[:, 1]
            # pose Jacobian is -[I | dq]; signs fold out of H and into g
            h_tt[:, 0, 0] += bsum(k_idx, omega, n_frames)
            h_tt[:, 1, 1] += bsum(k_idx, omega, n_frames)
            a = bsum(k_idx, omega * dqx, n_frames)
            b = bsum(k_idx, omega * dqy, n_frames)
            h_tt[:, 0, 2] += a
            h_tt[:, 2, 0] += a
            h_tt[:, 1, 2] += b
            h_tt[:, 2, 1] += b
            h_tt[:, 2, 2] += bsum(k_idx, omega * (dqx * dqx + dqy * dqy), n_frames)
            g_t[:, 0] -= bsum(k_idx, omega * rx, n_frames)
            g_t[:, 1] -= bsum(k_idx, omega * ry, n_frames)
            g_t[:, 2] -= bsum(k_idx, omega * (rx * dqx + ry * dqy), n_frames)
            if point_idx is not None:
                # point Jacobian is +I2; cross blocks couple pose and point
                h_pp[:] += bsum(point_idx, omega, m_obs)
                g_p[:, 0] += bsum(point_idx, omega * rx, m_obs)
                g_p[:, 1] += bsum(point_idx, omega * ry, m_obs)
                w_tp[k_idx, point_idx, 0, 0] = -omega
                w_tp[k_idx, point_idx, 1, 1] = -omega
                w_tp[k_idx, point_idx, 2, 0] = -omega * dqx
                w_tp[k_idx, point_idx, 2, 1] = -omega * dqy

        if len(fk):
            ref = points[fi]
            accumulate(fk, fcur, ref, weights.w_feature, fi_local)
        if len(sk):
            accumulate(sk, scur, sref, weights.w_scan)

        h_pp_d = h_pp + damping
        if m_obs:
            w_scaled = w_tp / h_pp_d[None, :, None, None]
            schur = np.einsum("kiax,libx->kalb", w_scaled, w_tp)
            s_mat = -schur.reshape(3 * n_frames, 3 * n_frames)
            b_t = g_t - np.einsum("kiax,ix->ka", w_scaled, g_p)
        else:
            s_mat = np.zeros((3 * n_frames, 3 * n_frames))
            b_t = g_t
        for k in range(n_frames):
            s_mat[3 * k : 3 * k + 3, 3 * k : 3 * k + 3] += h_tt[k] + damping * np.eye(3)
        try:
            delta_t = np.linalg.solve(s_mat, -b_t.reshape(-1)).reshape(n_frames, 3)
        except np.linalg.LinAlgError:
            damping *= 10.0
            continue
        if m_obs:
            back = np.einsum("kiax,ka->ix", w_tp, delta_t)
            delta_p = (-g_p - back) / h_pp_d[:, None]
        else:
            delta_p = np.zeros((0, 2))
        new_poses = poses + delta_t
        new_poses[:, 2] = wrap_angle_array(new_poses[:, 2])
        new_points = points.copy()
        if m_obs:
            new_points[obs_points] += delta_p
        new_cost = cost_at(new_poses, new_points)
        if new_cost <= cost:
            step_norm = math.sqrt(
                float((delta_t**2).sum()) + float((delta_p**2).sum())
            )
            poses = new_poses
            points = new_points
            cost = new_cost
            trace.append(cost)
            damping = max(damping / 10.0, 1e-12)
            if step_norm < _BA_STEP_TOL:
                break
        else:
            damping *= 10.0
    return BAResult(
        poses=[Pose2(*p) for p in poses],
        points=points,
        cost_trace=tuple(trace),
    )


class Tracker:
    """Stateful frame-by-frame odometry; single-owner, call in frame order."""

    def __init__(self, config: TrackerConfig = TrackerConfig()):
        self.config = config
        self.keyframe: Keyframe | None = None
        self.window: list[Frame] = []
        self._prev_frame: Frame | None = None

    def prepare_frame(
        self,
        index: int,
        timestamp: float,
        mask: FreeSpaceMask,
        features: FeatureFrame,
        odom: OdomSample,
    ) -> Frame:
        """Run the mask-to-scan pipeline and the feature ROI filter.

        A degenerate mask (vehicle center not free) yields an empty scan and
        no features, steering the tracker toward the odometry fallback.
        """
        try:
            scan, cleaned = make_scan(mask, self.config.scan_params)
            roi_features = apply_roi(features, cleaned)
        except DegenerateMaskError:
            scan = VirtualScan.empty(self.config.scan_params.angle_increment)
            roi_features = FeatureFrame.empty(timestamp)
        return Frame(
            index=index,
            timestamp=timestamp,
            scan=scan,
            features=roi_features,
            odom=odom,
        )

    def process(
        self,
        index: int,
        timestamp: float,
        mask: FreeSpaceMask,
        features: FeatureFrame,
        odom: OdomSample,
    ) -> TrackerOutput:
        frame = self.prepare_frame(index, timestamp, mask, features, odom)
        return self.track_frame(frame)

    def track_frame(self, frame: Frame) -> TrackerOutput:
        if self.keyframe is None:
            return self._initialize(frame)
        cfg = self.config
        kf = self.keyframe
        prev = self._prev_frame
        prior = predict_motion(prev, frame.odom, prev.odom)

        n_feat_matches = n_feat_inliers = 0
        feat_cur = np.empty((0, 2))
        feat_ref = np.empty((0, 2))
        feat_idx = np.empty(0, np.int64)
        if cfg.use_features and len(frame.features) and len(kf.frame.features):
            matches = direct_match(
                frame.features,
                kf.frame.features,
                prior,
                cfg.match_radius,
                cfg.max_hamming,
            )
            n_feat_matches = len(matches)
            if len(matches) >= 2:
                src = frame.features.positions[matches.current_idx]
                dst = kf.feature_points[matches.keyframe_idx]
                try:
                    flags, _ = ransac_se2(src, dst, cfg.feature_ransac)
                    feat_cur = src[flags]
                    feat_ref = dst[flags]
                    feat_idx = matches.keyframe_idx[flags]
                    n_feat_inliers = len(feat_cur)
                except EstimationError:
                    pass

        n_scan_matches = n_scan_inliers = 0
        scan_cur = np.empty((0, 2))
        scan_ref = np.empty((0, 2))
        if cfg.use_scans and len(frame.scan) and len(kf.frame.scan):
            try:
                result = match_scans(
                    frame.scan, kf.frame.scan, prior, cfg.match_params
                )
                n_scan_matches = len(result.correspondences)
                src = result.correspondences.current
                dst = result.correspondences.reference
                if len(src) >= 2:
                    flags, _ = ransac_se2(src, dst, cfg.scan_ransac)
                    scan_cur = src[flags]
                    scan_ref = dst[flags]
                    n_scan_inliers = len(scan_cur)
            except (ScanMatchError, EstimationError):
                pass

        weights = cfg.weights
        if not cfg.use_features:
            weights = replace(weights, w_feature=0.0)
        if not cfg.use_scans:
            weights = replace(weights, w_scan=0.0)

        pose = None
        cost = math.nan
        if len(feat_cur) + len(scan_cur) >= 2:
            try:
                est = estimate_relative_pose(
                    feat_cur, feat_ref, scan_cur, scan_ref, prior, weights, cfg.loss
                )
                pose = est.pose
                cost = est.cost
            except EstimationError:
                pose = None

        odom_delta = relative(prev.odom.pose, frame.odom.pose)
        status = STATUS_VO
        if pose is None:
            status = STATUS_FALLBACK
        else:
            vo_delta = relative(prev.pose_in_keyframe, pose)
            dt_err = math.hypot(
                vo_delta.x - odom_delta.x, vo_delta.y - odom_delta.y
            )
            dr_err = abs(wrap_angle(vo_delta.theta - odom_delta.theta))
            if dt_err > cfg.fallback_translation or dr_err > cfg.fallback_rotation:
                status = STATUS_FALLBACK
        if status == STATUS_FALLBACK:
            pose = compose(prev.pose_in_keyframe, odom_delta)
            feat_cur = np.empty((0, 2))
            feat_idx = np.empty(0, np.int64)
            scan_cur = np.empty((0, 2))
            scan_ref = np.empty((0, 2))
            cost = math.nan

        frame.pose_in_keyframe = pose
        frame.feat_obs_idx = feat_idx
        frame.feat_obs_cur = feat_cur
        frame.scan_obs_cur = scan_cur
        frame.scan_obs_ref = scan_ref
        self.window.append(frame)

        elapsed = frame.timestamp - kf.frame.timestamp
        odom_delta_kf = relative(kf.frame.odom.pose, frame.odom.pose)
        ba_initial = ba_final = math.nan
        world_pose = compose(kf.world_pose, pose)
        if (
            should_create_keyframe(pose, elapsed, odom_delta_kf, cfg)
            or len(self.window) >= cfg.max_window
        ):
            ba = local_bundle_adjustment(self.window, kf, weights, cfg.loss)
            ba_initial = ba.cost_trace[0]
            ba_final = ba.cost_trace[-1]
            for f, p in zip(self.window, ba.poses):
                f.pose_in_keyframe = p
            self.promote_keyframe(frame)
            status = STATUS_KEYFRAME
            world_pose = self.keyframe.world_pose

        self._prev_frame = frame
        return TrackerOutput(
            index=frame.index,
            timestamp=frame.timestamp,
            world_pose=world_pose,
            status=status,
            n_features=len(frame.features),
            n_feature_matches=n_feat_matches,
            n_feature_inliers=n_feat_inliers,
            n_scan_points=len(frame.scan),
            n_scan_matches=n_scan_matches,
            n_scan_inliers=n_scan_inliers,
            cost=cost,
            ba_initial_cost=ba_initial,
            ba_final_cost=ba_final,
        )

    def _initialize(self, frame: Frame) -> TrackerOutput:
        frame.pose_in_keyframe = Pose2()
        self.keyframe = Keyframe(
            frame=frame,
            world_pose=Pose2(),
            feature_points=frame.features.positions.copy(),
        )
        self.window = []
        self._prev_frame = frame
        return TrackerOutput(
            index=frame.index,
            timestamp=frame.timestamp,
            world_pose=Pose2(),
            status=STATUS_KEYFRAME,
            n_features=len(frame.features),
            n_scan_points=len(frame.scan),
        )

    def promote_keyframe(self, candidate: Frame) -> Keyframe:
        """Advance the keyframe to the optimized candidate frame."""
        new_world = compose(self.keyframe.world_pose, candidate.pose_in_keyframe)
        candidate.pose_in_keyframe = Pose2()
        candidate.feat_obs_idx = np.empty(0, np.int64)
        candidate.feat_obs_cur = np.empty((0, 2))
        candidate.scan_obs_cur = np.empty((0, 2))
        candidate.scan_obs_ref = np.empty((0, 2))
        self.keyframe = Keyframe(
            frame=candidate,
            world_pose=new_world,
            feature_points=candidate.features.positions.copy(),
        )
        self.window = []
        return self.keyframe
