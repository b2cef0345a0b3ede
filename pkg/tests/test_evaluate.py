import numpy as np
import pytest

from maskvo.errors import EvaluationError
from maskvo.evaluate import (
    AlignmentTransform,
    Summary,
    Trajectory,
    absolute_endpoint_error,
    align_trajectories,
    associate,
    relative_error,
)
from maskvo.geometry import Pose2, wrap_angle


def straight_trajectory(n=200, dt=0.2, speed=0.5):
    ts = np.arange(n) * dt
    poses = np.zeros((n, 3))
    poses[:, 0] = ts * speed
    return Trajectory(ts, poses)


def curved_trajectory(n=300, dt=0.2):
    from maskvo.geometry import wrap_angle_array

    ts = np.arange(n) * dt
    ang = 0.02 * np.arange(n)
    poses = np.stack(
        [5 * np.sin(ang), 5 * (1 - np.cos(ang)), wrap_angle_array(ang)], axis=1
    )
    return Trajectory(ts, poses)


def transform_trajectory(traj, pose, scale=1.0):
    t = AlignmentTransform(scale, pose.theta, np.array([pose.x, pose.y]))
    return t.apply(traj)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 3)))


def test_associate_equal_grids():
    a = straight_trajectory(50)
    b = straight_trajectory(50)
    ia, ib = associate(a, b)
    assert (ia == ib).all() and len(ia) == 50


def test_associate_offset_grid_within_tolerance():
    a = straight_trajectory(50)
    b = Trajectory(a.timestamps + 0.05, a.poses)
    ia, ib = associate(a, b)
    assert len(ia) == 50


def test_align_identity():
    traj = curved_trajectory()
    aligned, t = align_trajectories(traj, traj)
    assert t.scale == 1.0
    assert abs(t.rotation) < 1e-12
    assert np.allclose(t.translation, 0, atol=1e-12)
    assert np.allclose(aligned.poses, traj.poses, atol=1e-12)


def test_align_recovers_rigid_offset():
    traj = curved_trajectory()
    offset = Pose2(3.0, -2.0, 0.7)
    moved = transform_trajectory(traj, offset)
    aligned, t = align_trajectories(moved, traj, n_poses=100)
    assert np.allclose(aligned.poses[:, :2], traj.poses[:, :2], atol=1e-9)
    assert abs(wrap_angle(t.rotation + offset.theta)) < 1e-9


def test_align_recovers_scale():
    traj = curved_trajectory()
    moved = transform_trajectory(traj, Pose2(1.0, 0.5, -0.3), scale=2.5)
    aligned, t = align_trajectories(moved, traj, n_poses=150, with_scale=True)
    assert t.scale == pytest.approx(1 / 2.5, rel=1e-9)
    assert np.allclose(aligned.poses[:, :2], traj.poses[:, :2], atol=1e-9)


def test_align_errors():
    a = straight_trajectory(1)
    with pytest.raises(EvaluationError):
        align_trajectories(a, a)
    # zero-variance point set with scale fitting
    ts = np.arange(10) * 0.1
    static = Trajectory(ts, np.zeros((10, 3)))
    with pytest.raises(EvaluationError):
        align_trajectories(static, static, with_scale=True)


def test_relative_error_self_is_zero():
    traj = curved_trajectory()
    report = relative_error(traj, traj, (4.0, 8.0))
    for length in (4.0, 8.0):
        assert report.translation_percent[length].max == 0.0
        assert report.rotation_deg[length].max == 0.0


def test_relative_error_invariant_to_common_rigid_transform():
    traj = curved_trajectory()
    drift = traj.poses.copy()
    drift[:, 0] *= 1.003  # small drift so errors are nonzero
    est = Trajectory(traj.timestamps, drift)
    base = relative_error(est, traj, (8.0,))
    offset = Pose2(4.0, 1.0, 1.1)
    moved_est = transform_trajectory(est, offset)
    moved_ref = transform_trajectory(traj, offset)
    moved = relative_error(moved_est, moved_ref, (8.0,))
    assert base.translation_percent[8.0].median == pytest.approx(
        moved.translation_percent[8.0].median, abs=1e-9
    )


def test_relative_error_one_percent_drift():
    # estimate stretched by exactly 1% along the path
    ref = straight_trajectory(n=600, dt=0.2, speed=0.5)
    est = Trajectory(ref.timestamps, ref.poses * [1.01, 1.0, 1.0])
    report = relative_error(est, ref, (4.0, 8.0, 16.0, 32.0))
    for length in (4.0, 8.0, 16.0, 32.0):
        assert report.translation_percent[length].median == pytest.approx(1.0, abs=0.05)
        assert report.rotation_deg[length].median == pytest.approx(0.0, abs=1e-9)


def test_relative_error_constant_across_lengths_for_proportional_drift():
    ref = straight_trajectory(n=800, dt=0.2, speed=0.5)
    est = Trajectory(ref.timestamps, ref.poses * [1.02, 1.0, 1.0])
    report = relative_error(est, ref, (4.0, 8.0, 16.0))
    medians = [report.translation_percent[l].median for l in (4.0, 8.0, 16.0)]
    for m in medians:
        assert abs(m - medians[0]) / medians[0] < 0.1


def test_relative_error_short_trajectory_empty_bucket():
    ref = straight_trajectory(n=20, dt=0.2, speed=0.5)  # ~1.9 m long
    report = relative_error(ref, ref, (4.0,))
    assert 4.0 not in report.translation_percent


def test_relative_error_association_symmetry():
    # equal-rate trajectories with identical positions (same arc length both
    # ways) and perturbed headings: swapping the roles must not change the
    # medians beyond numerical noise, even with offset timestamp grids
    ref = curved_trajectory(400)
    rng = np.random.default_rng(7)
    perturbed = ref.poses.copy()
    perturbed[:, 2] = [
        wrap_angle(t + e) for t, e in zip(perturbed[:, 2], rng.normal(0, 0.01, 400))
    ]
    est = Trajectory(ref.timestamps + 0.04, perturbed)  # offset < half period
    a = relative_error(est, ref, (8.0,)).rotation_deg[8.0].median
    b = relative_error(ref, est, (8.0,)).rotation_deg[8.0].median
    assert abs(a - b) < 1e-6
    # drifted positions keep the medians close either way (ends may differ
    # by one frame where the two arc lengths disagree)
    drift = ref.poses.copy()
    drift[:, 0] *= 1.004
    est2 = Trajectory(ref.timestamps, drift)
    c = relative_error(est2, ref, (8.0,)).translation_percent[8.0].median
    d = relative_error(ref, est2, (8.0,)).translation_percent[8.0].median
    assert abs(c - d) < 0.05


def test_absolute_endpoint_error():
    traj = curved_trajectory()
    assert absolute_endpoint_error(traj, traj) == (0.0, 0.0)
    est = Trajectory(traj.timestamps, traj.poses.copy())
    # inject a pure translation after the alignment window
    est.poses[150:, 0] += 1.0
    terr, rerr = absolute_endpoint_error(est, traj, n_align=100)
    assert terr == pytest.approx(1.0, abs=0.05)
    assert rerr == pytest.approx(0.0, abs=0.5)
    with pytest.raises(EvaluationError):
        absolute_endpoint_error(Trajectory(np.empty(0), np.empty((0, 3))), traj)


def test_summary_quartiles():
    s = Summary.of(np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
    assert (s.min, s.median, s.max, s.mean) == (1.0, 3.0, 5.0, 3.0)
    assert s.q1 == 2.0 and s.q3 == 4.0
