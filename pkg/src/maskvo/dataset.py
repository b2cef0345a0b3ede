"""On-disk dataset formats: PGM masks, feature CSVs, calib, trajectories.

Layout of a dataset directory:

    calib.txt            scale_m_per_px=..., image_size_px=..., wheelbase_m=...,
                         frame_rate_hz=...
    masks/NNNNNN.pgm     binary P5, maxval 255; value >= 128 means free
    features/NNNNNN.csv  header id,x_px,y_px,descriptor; x_px is the image
                         column, y_px the image row, descriptor 64 hex chars
    odometry.csv         header frame,timestamp,x,y,theta
    groundtruth.csv      same schema as odometry.csv

All writers format floats with repr() so regeneration is byte-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DatasetError
from .features import FeatureFrame, descriptor_to_hex, hex_to_descriptor
from .geometry import OdomSample, Pose2
from .virtual_scan import FreeSpaceMask


@dataclass(frozen=True)
class Calib:
    scale_m_per_px: float
    image_size_px: int
    wheelbase_m: float
    frame_rate_hz: float


def _fmt(value: float) -> str:
    return repr(float(value))


def write_pgm(path: str, free: np.ndarray) -> None:
    """Write a boolean grid as binary PGM; free pixels are 255."""
    h, w = free.shape
    data = np.where(free, np.uint8(255), np.uint8(0))
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path: str) -> np.ndarray:
    """Read a binary PGM into a boolean free-space grid (>= 128 is free)."""
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    try:
        tokens = []
        pos = 0
        while len(tokens) < 4:
            if pos >= len(raw):
                raise ValueError("truncated header")
            ch = raw[pos : pos + 1]
            if ch.isspace():
                pos += 1
            elif ch == b"#":
                nl = raw.find(b"\n", pos)
                pos = len(raw) if nl < 0 else nl + 1
            else:
                end = pos
                while end < len(raw) and not raw[end : end + 1].isspace():
                    end += 1
                tokens.append(raw[pos:end])
                pos = end
        if tokens[0] != b"P5":
            raise ValueError(f"bad magic {tokens[0]!r}")
        w, h, maxval = (int(t) for t in tokens[1:4])
        if maxval != 255:
            raise ValueError(f"maxval must be 255, got {maxval}")
        pos += 1  # single whitespace byte after maxval
        data = raw[pos : pos + w * h]
        if len(data) != w * h:
            raise ValueError(f"expected {w * h} pixels, got {len(data)}")
        grid = np.frombuffer(data, dtype=np.uint8).reshape(h, w)
        return grid >= 128
    except ValueError as exc:
        raise DatasetError(f"corrupt PGM {path}: {exc}") from exc


def write_features_csv(path: str, frame: FeatureFrame, mask: FreeSpaceMask) -> None:
    """Write one frame's features with pixel coordinates in the mask image."""
    h, w = mask.free.shape
    with open(path, "w", newline="", encoding="ascii") as f:
        f.write("id,x_px,y_px,descriptor\n")
        for i in range(len(frame)):
            x_m, y_m = frame.positions[i]
            y_px = h * 0.5 - 0.5 - x_m / mask.scale  # image row
            x_px = w * 0.5 - 0.5 - y_m / mask.scale  # image column
            f.write(
                f"{int(frame.ids[i])},{_fmt(x_px)},{_fmt(y_px)},"
                f"{descriptor_to_hex(frame.descriptors[i])}\n"
            )


def read_features_csv(
    path: str, mask_size_px: int, scale: float, timestamp: float = 0.0
) -> FeatureFrame:
    try:
        with open(path, "r", encoding="ascii") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    if not lines or lines[0] != "id,x_px,y_px,descriptor":
        raise DatasetError(f"{path}: expected header 'id,x_px,y_px,descriptor'")
    ids, positions, descriptors = [], [], []
    h = w = mask_size_px
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise DatasetError(f"{path}:{ln}: expected 4 columns")
        try:
            fid = int(parts[0])
            x_px = float(parts[1])
            y_px = float(parts[2])
            desc = hex_to_descriptor(parts[3])
        except ValueError as exc:
            raise DatasetError(f"{path}:{ln}: {exc}") from exc
        x_m = (h * 0.5 - y_px - 0.5) * scale
        y_m = (w * 0.5 - x_px - 0.5) * scale
        ids.append(fid)
        positions.append((x_m, y_m))
        descriptors.append(desc)
    if not ids:
        return FeatureFrame.empty(timestamp)
    return FeatureFrame(
        timestamp,
        np.array(ids, np.int64),
        np.array(positions, float),
        np.array(descriptors, np.uint64),
    )


def write_calib(path: str, calib: Calib) -> None:
    with open(path, "w", newline="", encoding="ascii") as f:
        f.write(f"scale_m_per_px={_fmt(calib.scale_m_per_px)}\n")
        f.write(f"image_size_px={int(calib.image_size_px)}\n")
        f.write(f"wheelbase_m={_fmt(calib.wheelbase_m)}\n")
        f.write(f"frame_rate_hz={_fmt(calib.frame_rate_hz)}\n")


def read_calib(path: str) -> Calib:
    try:
        with open(path, "r", encoding="ascii") as f:
            lines = [ln for ln in f.read().splitlines() if ln]
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    values = {}
    for ln, line in enumerate(lines, start=1):
        if "=" not in line:
            raise DatasetError(f"{path}:{ln}: expected key=value")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    try:
        return Calib(
            scale_m_per_px=float(values["scale_m_per_px"]),
            image_size_px=int(values["image_size_px"]),
            wheelbase_m=float(values["wheelbase_m"]),
            frame_rate_hz=float(values["frame_rate_hz"]),
        )
    except KeyError as exc:
        raise DatasetError(f"{path}: missing key {exc}") from exc
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from exc


def write_pose_csv(path: str, rows, statuses=None) -> None:
    """Write frame,timestamp,x,y,theta[,status] rows.

    ``rows`` is an iterable of (frame, timestamp, Pose2).
    """
    with open(path, "w", newline="", encoding="ascii") as f:
        if statuses is None:
            f.write("frame,timestamp,x,y,theta\n")
            for frame, ts, pose in rows:
                f.write(
                    f"{frame},{_fmt(ts)},{_fmt(pose.x)},{_fmt(pose.y)},"
                    f"{_fmt(pose.theta)}\n"
                )
        else:
            f.write("frame,timestamp,x,y,theta,status\n")
            for (frame, ts, pose), status in zip(rows, statuses):
                f.write(
                    f"{frame},{_fmt(ts)},{_fmt(pose.x)},{_fmt(pose.y)},"
                    f"{_fmt(pose.theta)},{status}\n"
                )


def read_pose_csv(path: str):
    """Read frame,timestamp,x,y,theta[,status] rows.

    Returns (frames, timestamps, poses (N,3) array, statuses or None).
    """
    try:
        with open(path, "r", encoding="ascii") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise DatasetError(f"{path}: empty file")
    header = lines[0].split(",")
    required = ["frame", "timestamp", "x", "y", "theta"]
    for col in required:
        if col not in header:
            raise DatasetError(f"{path}: missing column '{col}'")
    col_idx = {name: header.index(name) for name in header}
    has_status = "status" in col_idx
    frames, timestamps, poses, statuses = [], [], [], []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise DatasetError(f"{path}:{ln}: expected {len(header)} columns")
        try:
            frames.append(int(parts[col_idx["frame"]]))
            timestamps.append(float(parts[col_idx["timestamp"]]))
            poses.append(
                (
                    float(parts[col_idx["x"]]),
                    float(parts[col_idx["y"]]),
                    float(parts[col_idx["theta"]]),
                )
            )
        except ValueError as exc:
            raise DatasetError(f"{path}:{ln}: {exc}") from exc
        if has_status:
            statuses.append(parts[col_idx["status"]])
    return (
        np.array(frames, np.int64),
        np.array(timestamps, float),
        np.array(poses, float).reshape(-1, 3),
        statuses if has_status else None,
    )


@dataclass(frozen=True)
class DatasetFrame:
    index: int
    timestamp: float
    mask: FreeSpaceMask
    features: FeatureFrame
    odom: OdomSample


class DatasetReader:
    """Validated access to a dataset directory, frames in index order."""

    def __init__(self, root: str):
        self.root = root
        calib_path = os.path.join(root, "calib.txt")
        if not os.path.isfile(calib_path):
            raise DatasetError(f"missing {calib_path}")
        self.calib = read_calib(calib_path)
        odom_path = os.path.join(root, "odometry.csv")
        if not os.path.isfile(odom_path):
            raise DatasetError(f"missing {odom_path}")
        frames, timestamps, poses, _ = read_pose_csv(odom_path)
        if len(timestamps) > 1 and not (np.diff(timestamps) > 0).all():
            raise DatasetError(f"{odom_path}: timestamps must be strictly increasing")
        self.frame_indices = frames
        self.timestamps = timestamps
        self._odom_poses = poses
        for k, idx in enumerate(frames):
            for sub, ext in (("masks", "pgm"), ("features", "csv")):
                p = os.path.join(root, sub, f"{idx:06d}.{ext}")
                if not os.path.isfile(p):
                    raise DatasetError(f"missing {p}")

    def __len__(self) -> int:
        return len(self.frame_indices)

    def __iter__(self):
        for k in range(len(self)):
            yield self.load_frame(k)

    def load_frame(self, k: int) -> DatasetFrame:
        idx = int(self.frame_indices[k])
        ts = float(self.timestamps[k])
        mask_path = os.path.join(self.root, "masks", f"{idx:06d}.pgm")
        free = read_pgm(mask_path)
        if free.shape[0] != self.calib.image_size_px:
            raise DatasetError(
                f"{mask_path}: size {free.shape} does not match calib "
                f"image_size_px={self.calib.image_size_px}"
            )
        mask = FreeSpaceMask(free, self.calib.scale_m_per_px)
        feat_path = os.path.join(self.root, "features", f"{idx:06d}.csv")
        features = read_features_csv(
            feat_path, self.calib.image_size_px, self.calib.scale_m_per_px, ts
        )
        x, y, theta = self._odom_poses[k]
        return DatasetFrame(
            index=idx,
            timestamp=ts,
            mask=mask,
            features=features,
            odom=OdomSample(ts, Pose2(x, y, theta)),
        )
