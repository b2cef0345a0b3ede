"""Run configuration: INI-style files, defaults, validation, echoing.

Format: ``[section]`` headers, ``key = value`` lines, ``#`` comments.
Unknown sections or keys are rejected with the offending line number.
Every default is the reference operating point of the pipeline; the
effective (defaults + overrides) configuration can be written back out and
re-used verbatim to reproduce a run.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .errors import ConfigError
from .estimation import CauchyLoss, FusionWeights, RansacParams
from .geometry import Pose2
from .scan_match import ScanMatchParams
from .simulate import NoiseConfig, TrajectorySpec, World, build_world
from .tracker import MODES, TrackerConfig
from .virtual_scan import ScanParams

# (section, key) -> (parser, default); order defines the echoed file
_SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "run": {
        "mode": ("mode", "scan_feature"),
        "seed": ("u64", 0),
    },
    "lidar": {
        "image_size_px": ("int", 384),
        "scale_m_per_px": ("float", 0.03984),
        "angle_increment_deg": ("float", 1.0),
        "open_kernel_px": ("int", 2),
        "min_obstacle_area_px": ("int", 50),
        "border_margin_px": ("int", 10),
    },
    "matcher": {
        "match_radius_m": ("float", 0.1),
        "max_hamming_bits": ("int", 64),
    },
    "scan_matcher": {
        "max_iterations": ("int", 50),
        "convergence_eps": ("float", 1e-6),
        "max_correspondence_dist_m": ("float", 1.0),
        "trim_fraction": ("float", 0.1),
    },
    "ransac": {
        "feature_inlier_threshold_m": ("float", 0.05),
        "scan_inlier_threshold_m": ("float", 0.10),
        "max_iterations": ("int", 200),
    },
    "fusion": {
        "w_feature": ("float", 1.0),
        "w_scan": ("float", 0.1),
        "cauchy_scale_m": ("float", 0.5),
    },
    "keyframe": {
        "translation_m": ("float", 1.5),
        "rotation_rad": ("float", 0.6),
        "time_s": ("float", 3.0),
        "max_window": ("int", 120),
    },
    "fallback": {
        "translation_m": ("float", 0.2),
        "rotation_rad": ("float", 0.1),
    },
    "vehicle": {
        "wheelbase_m": ("float", 2.5),
    },
    "noise": {
        "feature_sigma_m": ("float", 0.02),
        "mask_boundary_jitter_px": ("int", 1),
        "odom_translation_sigma": ("float", 0.01),
        "odom_rotation_sigma": ("float", 0.01),
        "descriptor_flip_bits": ("int", 0),
    },
    "world": {
        "bounds_m": ("floats4", (-12.0, -12.0, 12.0, 12.0)),
        "landmark_density_per_m2": ("float", 3.0),
        "occlusion": ("bool", True),
    },
    "trajectory": {
        "frame_rate_hz": ("float", 10.0),
        "start_pose": ("floats3", (0.0, 0.0, 0.0)),
    },
}

_OBSTACLE_SECTION = re.compile(r"^obstacle:\d+$")
_SEGMENT_SECTION = re.compile(r"^segment:\d+$")


def _parse_value(kind: str, raw: str, where: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "u64":
            value = int(raw)
            if not 0 <= value < 2**64:
                raise ValueError(f"seed must be a 64-bit unsigned integer, got {value}")
            return value
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "str":
            return raw.strip()
        if kind == "mode":
            value = raw.strip()
            if value not in MODES:
                raise ValueError(f"mode must be one of {MODES}, got {value!r}")
            return value
        if kind in ("floats3", "floats4"):
            parts = raw.split()
            want = int(kind[-1])
            if len(parts) != want:
                raise ValueError(f"expected {want} numbers, got {len(parts)}")
            return tuple(float(p) for p in parts)
        if kind == "vertices":
            pairs = [p.strip() for p in raw.split(";") if p.strip()]
            verts = []
            for p in pairs:
                nums = p.split()
                if len(nums) != 2:
                    raise ValueError(f"vertex must be 'x y', got {p!r}")
                verts.append((float(nums[0]), float(nums[1])))
            if len(verts) < 3:
                raise ValueError("polygons need at least 3 vertices")
            return tuple(verts)
        if kind == "segment":
            nums = raw.split()
            if len(nums) != 3:
                raise ValueError("segment must be 'duration_s speed_mps steering_rad'")
            return tuple(float(n) for n in nums)
        raise AssertionError(kind)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _read_ini(path: str) -> dict[str, dict[str, tuple[str, int]]]:
    """Parse an INI file into section -> key -> (raw value, line number)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current: str | None = None
    for ln, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{ln}: expected 'key = value' or '[section]'")
        if current is None:
            raise ConfigError(f"{path}:{ln}: key outside any section")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in sections[current]:
            raise ConfigError(f"{path}:{ln}: duplicate key '{key}'")
        sections[current][key] = (value.strip(), ln)
    return sections


@dataclass
class RunConfig:
    """Typed view of the full configuration."""

    values: dict[str, dict[str, object]] = field(default_factory=dict)
    obstacles: tuple = ()
    segments: tuple = ()

    def get(self, section: str, key: str):
        return self.values[section][key]

    # --- domain object builders -------------------------------------------
    def scan_params(self) -> ScanParams:
        lidar = self.values["lidar"]
        return ScanParams(
            open_kernel_px=lidar["open_kernel_px"],
            min_obstacle_area_px=lidar["min_obstacle_area_px"],
            border_margin_px=lidar["border_margin_px"],
            angle_increment=math.radians(lidar["angle_increment_deg"]),
        )

    def tracker_config(self) -> TrackerConfig:
        v = self.values
        seed = v["run"]["seed"]
        return TrackerConfig(
            mode=v["run"]["mode"],
            kf_translation=v["keyframe"]["translation_m"],
            kf_rotation=v["keyframe"]["rotation_rad"],
            kf_time=v["keyframe"]["time_s"],
            max_window=v["keyframe"]["max_window"],
            fallback_translation=v["fallback"]["translation_m"],
            fallback_rotation=v["fallback"]["rotation_rad"],
            weights=FusionWeights(v["fusion"]["w_feature"], v["fusion"]["w_scan"]),
            loss=CauchyLoss(v["fusion"]["cauchy_scale_m"]),
            scan_params=self.scan_params(),
            match_params=ScanMatchParams(
                max_iterations=v["scan_matcher"]["max_iterations"],
                convergence_eps=v["scan_matcher"]["convergence_eps"],
                max_correspondence_dist=v["scan_matcher"]["max_correspondence_dist_m"],
                trim_fraction=v["scan_matcher"]["trim_fraction"],
            ),
            match_radius=v["matcher"]["match_radius_m"],
            max_hamming=v["matcher"]["max_hamming_bits"],
            feature_ransac=RansacParams(
                inlier_threshold=v["ransac"]["feature_inlier_threshold_m"],
                max_iterations=v["ransac"]["max_iterations"],
                seed=seed,
            ),
            scan_ransac=RansacParams(
                inlier_threshold=v["ransac"]["scan_inlier_threshold_m"],
                max_iterations=v["ransac"]["max_iterations"],
                seed=seed,
            ),
            wheelbase=v["vehicle"]["wheelbase_m"],
        )

    def noise_config(self) -> NoiseConfig:
        n = self.values["noise"]
        return NoiseConfig(
            feature_sigma=n["feature_sigma_m"],
            mask_boundary_jitter=n["mask_boundary_jitter_px"],
            odom_translation_sigma=n["odom_translation_sigma"],
            odom_rotation_sigma=n["odom_rotation_sigma"],
            descriptor_flip_bits=n["descriptor_flip_bits"],
            seed=self.values["run"]["seed"],
        )

    def world(self) -> World:
        w = self.values["world"]
        return build_world(
            bounds=w["bounds_m"],
            obstacles=self.obstacles,
            landmark_density=w["landmark_density_per_m2"],
            seed=self.values["run"]["seed"],
        )

    def trajectory_spec(self) -> TrajectorySpec:
        if not self.segments:
            raise ConfigError("no [segment:N] sections: nothing to simulate")
        t = self.values["trajectory"]
        return TrajectorySpec(
            segments=self.segments,
            frame_rate=t["frame_rate_hz"],
            start=Pose2(*t["start_pose"]),
        )

    # --- echoing ------------------------------------------------------------
    def dump(self) -> str:
        """Effective configuration as reparseable INI text."""
        out = []
        for section, keys in _SCHEMA.items():
            out.append(f"[{section}]")
            for key in keys:
                value = self.values[section][key]
                out.append(f"{key} = {_format_value(value)}")
            out.append("")
        for i, verts in enumerate(self.obstacles):
            out.append(f"[obstacle:{i}]")
            out.append(
                "vertices = "
                + "; ".join(f"{_format_value(x)} {_format_value(y)}" for x, y in verts)
            )
            out.append("")
        for i, (d, v, s) in enumerate(self.segments):
            out.append(f"[segment:{i}]")
            out.append(
                f"controls = {_format_value(d)} {_format_value(v)} {_format_value(s)}"
            )
            out.append("")
        return "\n".join(out)

    def write(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(self.dump())


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return " ".join(_format_value(v) for v in value)
    return str(value)


def default_config() -> RunConfig:
    values = {
        section: {key: default for key, (_, default) in keys.items()}
        for section, keys in _SCHEMA.items()
    }
    return RunConfig(values=values)


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Defaults, overlaid with an optional file and CLI overrides.

    ``overrides`` maps (section, key) to already-typed values.
    """
    config = default_config()
    if path is not None:
        raw = _read_ini(path)
        obstacles = {}
        segments = {}
        for section, entries in raw.items():
            if _OBSTACLE_SECTION.match(section):
                for key, (value, ln) in entries.items():
                    if key != "vertices":
                        raise ConfigError(
                            f"{path}:{ln}: unknown key '{key}' in [{section}]"
                        )
                    obstacles[int(section.split(":")[1])] = _parse_value(
                        "vertices", value, f"{path}:{ln}"
                    )
                continue
            if _SEGMENT_SECTION.match(section):
                for key, (value, ln) in entries.items():
                    if key != "controls":
                        raise ConfigError(
                            f"{path}:{ln}: unknown key '{key}' in [{section}]"
                        )
                    segments[int(section.split(":")[1])] = _parse_value(
                        "segment", value, f"{path}:{ln}"
                    )
                continue
            if section not in _SCHEMA:
                raise ConfigError(f"{path}: unknown section '[{section}]'")
            for key, (value, ln) in entries.items():
                if key not in _SCHEMA[section]:
                    raise ConfigError(
                        f"{path}:{ln}: unknown key '{key}' in [{section}]"
                    )
                kind = _SCHEMA[section][key][0]
                config.values[section][key] = _parse_value(
                    kind, value, f"{path}:{ln}"
                )
        config.obstacles = tuple(obstacles[i] for i in sorted(obstacles))
        config.segments = tuple(segments[i] for i in sorted(segments))
    for (section, key), value in (overrides or {}).items():
        config.values[section][key] = value
    return config
