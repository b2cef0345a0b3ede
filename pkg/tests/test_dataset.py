import numpy as np
import pytest

from maskvo.dataset import (
    Calib,
    DatasetReader,
    read_calib,
    read_features_csv,
    read_pgm,
    read_pose_csv,
    write_calib,
    write_features_csv,
    write_pgm,
    write_pose_csv,
)
from maskvo.errors import DatasetError
from maskvo.features import FeatureFrame
from maskvo.geometry import Pose2
from maskvo.virtual_scan import FreeSpaceMask
from oracles import random_blob_mask


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    free = random_blob_mask(64, rng)
    path = tmp_path / "m.pgm"
    write_pgm(str(path), free)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n64 64\n255\n")
    assert len(raw) == len(b"P5\n64 64\n255\n") + 64 * 64
    back = read_pgm(str(path))
    assert (back == free).all()


def test_pgm_threshold_semantics(tmp_path):
    path = tmp_path / "m.pgm"
    data = bytes([0, 127, 128, 255])
    path.write_bytes(b"P5\n2 2\n255\n" + data)
    free = read_pgm(str(path))
    assert free.tolist() == [[False, False], [True, True]]


def test_pgm_errors(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_bytes(b"P6\n2 2\n255\n" + bytes(4))
    with pytest.raises(DatasetError, match="bad.pgm"):
        read_pgm(str(p))
    p.write_bytes(b"P5\n4 4\n255\n" + bytes(3))  # truncated
    with pytest.raises(DatasetError, match="bad.pgm"):
        read_pgm(str(p))
    p.write_bytes(b"P5\n2 2\n99\n" + bytes(4))
    with pytest.raises(DatasetError):
        read_pgm(str(p))
    with pytest.raises(DatasetError, match="missing.pgm"):
        read_pgm(str(tmp_path / "missing.pgm"))


def test_pgm_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n2 2\n255\n" + bytes([255, 0, 0, 255]))
    free = read_pgm(str(p))
    assert free.tolist() == [[True, False], [False, True]]


def test_features_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    mask = FreeSpaceMask(np.ones((128, 128), bool), 0.05)
    frame = FeatureFrame(
        1.5,
        np.arange(10),
        rng.uniform(-3, 3, (10, 2)),
        rng.integers(0, 2**64, (10, 4), dtype=np.uint64),
    )
    path = tmp_path / "f.csv"
    write_features_csv(str(path), frame, mask)
    text = path.read_text().splitlines()
    assert text[0] == "id,x_px,y_px,descriptor"
    assert len(text) == 11
    back = read_features_csv(str(path), 128, 0.05, 1.5)
    assert (back.ids == frame.ids).all()
    assert np.allclose(back.positions, frame.positions, atol=1e-12)
    assert (back.descriptors == frame.descriptors).all()


def test_features_csv_pixel_convention(tmp_path):
    # a feature straight ahead (x>0, y=0) has small y_px (image-up) and
    # x_px near the horizontal center
    mask = FreeSpaceMask(np.ones((384, 384), bool), 0.03984)
    frame = FeatureFrame(
        0.0,
        np.array([7]),
        np.array([[5.0, 0.0]]),
        np.zeros((1, 4), np.uint64),
    )
    path = tmp_path / "f.csv"
    write_features_csv(str(path), frame, mask)
    _, x_px, y_px, _ = path.read_text().splitlines()[1].split(",")
    assert float(y_px) < 100  # forward means up in the image
    assert abs(float(x_px) - 191.5) < 1e-9


def test_features_csv_errors(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("id,x,y,descriptor\n")
    with pytest.raises(DatasetError, match="header"):
        read_features_csv(str(p), 64, 0.1)
    p.write_text("id,x_px,y_px,descriptor\n1,2,3\n")
    with pytest.raises(DatasetError, match="4 columns"):
        read_features_csv(str(p), 64, 0.1)
    p.write_text("id,x_px,y_px,descriptor\n1,2,3,zz\n")
    with pytest.raises(DatasetError):
        read_features_csv(str(p), 64, 0.1)


def test_calib_round_trip(tmp_path):
    calib = Calib(0.03984, 384, 2.5, 10.0)
    path = tmp_path / "calib.txt"
    write_calib(str(path), calib)
    text = path.read_text()
    assert "scale_m_per_px=0.03984" in text
    assert "image_size_px=384" in text
    back = read_calib(str(path))
    assert back == calib
    path.write_text("scale_m_per_px=0.1\n")
    with pytest.raises(DatasetError, match="missing key"):
        read_calib(str(path))


def test_pose_csv_round_trip(tmp_path):
    rows = [(k, 0.1 * k, Pose2(k * 0.5, -k * 0.25, 0.01 * k)) for k in range(5)]
    path = tmp_path / "t.csv"
    write_pose_csv(str(path), rows)
    frames, ts, poses, statuses = read_pose_csv(str(path))
    assert statuses is None
    assert (frames == np.arange(5)).all()
    assert np.allclose(poses[:, 0], [0, 0.5, 1.0, 1.5, 2.0])
    write_pose_csv(str(path), rows, ["vo"] * 4 + ["new_keyframe"])
    frames, ts, poses, statuses = read_pose_csv(str(path))
    assert statuses[-1] == "new_keyframe"


def test_pose_csv_missing_column(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("frame,timestamp,x,y\n0,0.0,1.0,2.0\n")
    with pytest.raises(DatasetError, match="theta"):
        read_pose_csv(str(p))


def test_dataset_reader_happy_path(tmp_path):
    from maskvo.simulate import NoiseConfig, TrajectorySpec, build_world, generate_dataset

    world = build_world((-6, -6, 6, 6), [], landmark_density=1.0, seed=2)
    spec = TrajectorySpec(segments=((0.6, 0.5, 0.0),), frame_rate=5.0)
    generate_dataset(world, spec, NoiseConfig(seed=2), str(tmp_path), size_px=96, scale=0.13)
    reader = DatasetReader(str(tmp_path))
    assert len(reader) == 4
    frames = list(reader)
    assert frames[0].mask.free.shape == (96, 96)
    assert frames[0].odom.timestamp == 0.0
    assert frames[-1].index == 3


def test_dataset_reader_missing_files(tmp_path):
    with pytest.raises(DatasetError, match="calib.txt"):
        DatasetReader(str(tmp_path))
    from maskvo.simulate import NoiseConfig, TrajectorySpec, build_world, generate_dataset

    world = build_world((-6, -6, 6, 6), [], landmark_density=1.0, seed=2)
    spec = TrajectorySpec(segments=((0.6, 0.5, 0.0),), frame_rate=5.0)
    generate_dataset(world, spec, NoiseConfig(seed=2), str(tmp_path), size_px=96, scale=0.13)
    (tmp_path / "masks" / "000002.pgm").unlink()
    with pytest.raises(DatasetError, match="000002.pgm"):
        DatasetReader(str(tmp_path))
