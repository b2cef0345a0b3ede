import numpy as np
import pytest

from maskvo.features import (
    FeatureFrame,
    apply_roi,
    descriptor_to_hex,
    direct_match,
    hex_to_descriptor,
)
from maskvo.geometry import Pose2, transform_points
from maskvo.virtual_scan import FreeSpaceMask


def frame_of(positions, ids=None, descriptors=None, ts=0.0):
    positions = np.asarray(positions, float).reshape(-1, 2)
    n = len(positions)
    if ids is None:
        ids = np.arange(n)
    if descriptors is None:
        rng = np.random.default_rng(99)
        descriptors = rng.integers(0, 2**64, (n, 4), dtype=np.uint64)
    return FeatureFrame(ts, np.asarray(ids, np.int64), positions, descriptors)


def test_descriptor_hex_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        words = rng.integers(0, 2**64, 4, dtype=np.uint64)
        text = descriptor_to_hex(words)
        assert len(text) == 64 and text == text.lower()
        assert (hex_to_descriptor(text) == words).all()
    assert descriptor_to_hex(np.zeros(4, np.uint64)) == "0" * 64
    # most significant nibble first
    words = np.array([0xF000000000000000, 0, 0, 0], np.uint64)
    assert descriptor_to_hex(words)[0] == "f"
    with pytest.raises(ValueError):
        hex_to_descriptor("ab")


def test_feature_frame_validation():
    with pytest.raises(ValueError):
        frame_of([[0, 0], [1, 1]], ids=[3, 3])
    with pytest.raises(ValueError):
        frame_of([[np.nan, 0]])


def test_apply_roi_all_free_keeps_everything():
    mask = FreeSpaceMask(np.ones((64, 64), bool), 0.1)
    frame = frame_of([[0.5, 0.5], [-1.0, 2.0], [3.0, -3.0]])
    out = apply_roi(frame, mask)
    assert len(out) == 3
    assert (out.ids == frame.ids).all()


def test_apply_roi_rejects_obstacle_and_outside():
    free = np.ones((64, 64), bool)
    mask = FreeSpaceMask(free, 0.1)
    rows, cols = mask.metric_to_pixel(np.array([[1.0, 1.0]]))
    free2 = free.copy()
    free2[rows[0], cols[0]] = False
    mask2 = FreeSpaceMask(free2, 0.1)
    frame = frame_of([[1.0, 1.0], [0.0, 0.0], [100.0, 0.0]])
    out = apply_roi(frame, mask2)
    assert list(out.ids) == [1]


def test_apply_roi_pixel_boundary_assignment():
    # a feature exactly on a pixel edge goes to the floor-rule pixel
    mask_free = np.ones((64, 64), bool)
    mask = FreeSpaceMask(mask_free, 0.1)
    x = (32 - 10) * 0.1  # boundary between rows 9 and 10
    rows, cols = mask.metric_to_pixel(np.array([[x, 0.0]]))
    assert rows[0] == 10
    free2 = mask_free.copy()
    free2[10, cols[0]] = False
    out = apply_roi(frame_of([[x, 0.0]]), FreeSpaceMask(free2, 0.1))
    assert len(out) == 0


def test_direct_match_identity():
    rng = np.random.default_rng(1)
    pos = rng.uniform(-5, 5, (40, 2))
    frame = frame_of(pos)
    matches = direct_match(frame, frame, Pose2(), 0.1, 64)
    assert len(matches) == 40
    assert (matches.hamming == 0).all()
    assert (frame.ids[matches.current_idx] == frame.ids[matches.keyframe_idx]).all()


def test_direct_match_radius_gate():
    kf = frame_of([[1.0, 0.0]])
    cur = FeatureFrame(0.0, kf.ids, kf.positions - [0.15, 0.0], kf.descriptors)
    assert len(direct_match(cur, kf, Pose2(), 0.1, 64)) == 0
    cur2 = FeatureFrame(0.0, kf.ids, kf.positions - [0.05, 0.0], kf.descriptors)
    assert len(direct_match(cur2, kf, Pose2(), 0.1, 64)) == 1


def test_direct_match_prefers_lower_hamming():
    rng = np.random.default_rng(2)
    desc = rng.integers(0, 2**64, (1, 4), dtype=np.uint64)
    # two keyframe candidates inside the radius: hamming 4 vs hamming 40
    d4 = desc[0].copy()
    d40 = desc[0].copy()
    for b in range(4):
        d4[0] ^= np.uint64(1) << np.uint64(b)
    for b in range(40):
        d40[b // 16] ^= np.uint64(1) << np.uint64(b % 16 + 20)
    cur = FeatureFrame(0.0, np.array([0]), np.array([[1.0, 1.0]]), desc)
    kf = FeatureFrame(
        0.0,
        np.array([10, 11]),
        np.array([[1.02, 1.0], [0.98, 1.0]]),
        np.stack([d40, d4]),
    )
    m = direct_match(cur, kf, Pose2(), 0.1, 64)
    assert len(m) == 1
    assert kf.ids[m.keyframe_idx[0]] == 11


def test_direct_match_max_hamming_gate():
    desc = np.zeros((1, 4), np.uint64)
    flipped = desc.copy()
    for b in range(70):
        flipped[0, b // 32] ^= np.uint64(1) << np.uint64(b % 32)
    cur = FeatureFrame(0.0, np.array([0]), np.array([[0.0, 0.0]]), desc)
    kf = FeatureFrame(0.0, np.array([1]), np.array([[0.0, 0.0]]), flipped)
    assert len(direct_match(cur, kf, Pose2(), 0.1, 64)) == 0
    assert len(direct_match(cur, kf, Pose2(), 0.1, 128)) == 1


def test_direct_match_projection_uses_predicted_pose():
    rng = np.random.default_rng(3)
    pos = rng.uniform(-4, 4, (30, 2))
    kf_frame = frame_of(pos)
    pose = Pose2(0.8, -0.4, 0.2)
    # current features are the keyframe features seen from a moved vehicle
    from maskvo.geometry import inverse

    cur_frame = FeatureFrame(
        0.0, kf_frame.ids, transform_points(inverse(pose), pos), kf_frame.descriptors
    )
    matches = direct_match(cur_frame, kf_frame, pose, 0.1, 64)
    assert len(matches) == 30
    assert (matches.hamming == 0).all()


def test_one_to_one_and_order_invariance():
    rng = np.random.default_rng(4)
    pos = rng.uniform(-5, 5, (25, 2))
    frame = frame_of(pos)
    perm = rng.permutation(25)
    shuffled = FeatureFrame(
        0.0, frame.ids[perm], frame.positions[perm], frame.descriptors[perm]
    )
    m1 = direct_match(frame, frame, Pose2(), 0.2, 64)
    m2 = direct_match(shuffled, frame, Pose2(), 0.2, 64)
    pairs1 = set(zip(frame.ids[m1.current_idx], frame.ids[m1.keyframe_idx]))
    pairs2 = set(zip(shuffled.ids[m2.current_idx], frame.ids[m2.keyframe_idx]))
    assert pairs1 == pairs2
    # one-to-one
    assert len(np.unique(m1.keyframe_idx)) == len(m1)
    assert len(np.unique(m1.current_idx)) == len(m1)


def test_monotonicity_on_separated_features():
    # with features separated by > 2*radius each projection has at most one
    # candidate, so shrinking either gate can only remove correspondences
    rng = np.random.default_rng(5)
    grid = np.stack(np.meshgrid(np.arange(5), np.arange(5)), -1).reshape(-1, 2) * 1.0
    kf = frame_of(grid + rng.normal(0, 0.01, grid.shape))
    cur = FeatureFrame(
        0.0, kf.ids, kf.positions + rng.normal(0, 0.03, grid.shape), kf.descriptors
    )
    base = direct_match(cur, kf, Pose2(), 0.1, 64)
    base_pairs = set(zip(base.current_idx, base.keyframe_idx))
    for radius in (0.08, 0.05, 0.02):
        smaller = direct_match(cur, kf, Pose2(), radius, 64)
        pairs = set(zip(smaller.current_idx, smaller.keyframe_idx))
        assert pairs <= base_pairs
        base_pairs = pairs


def test_radius_respected_property():
    rng = np.random.default_rng(6)
    pos = rng.uniform(-5, 5, (60, 2))
    kf = frame_of(pos)
    cur = FeatureFrame(
        0.0, kf.ids, pos + rng.normal(0, 0.05, pos.shape), kf.descriptors
    )
    pose = Pose2(0.01, -0.02, 0.005)
    m = direct_match(cur, kf, pose, 0.1, 64)
    proj = transform_points(pose, cur.positions[m.current_idx])
    d = np.linalg.norm(proj - kf.positions[m.keyframe_idx], axis=1)
    assert (d <= 0.1 + 1e-12).all()


def test_empty_inputs():
    frame = frame_of([[0.0, 0.0]])
    empty = FeatureFrame.empty()
    assert len(direct_match(empty, frame, Pose2(), 0.1, 64)) == 0
    assert len(direct_match(frame, empty, Pose2(), 0.1, 64)) == 0
    with pytest.raises(ValueError):
        direct_match(frame, frame, Pose2(), 0.0, 64)
