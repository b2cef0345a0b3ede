"""Command-line entry point: simulate, run, eval, plot.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from .config import load_config
from .dataset import DatasetReader, read_pose_csv, write_pose_csv
from .errors import ConfigError, DatasetError, EvaluationError, MaskVOError
from .evaluate import (
    DEFAULT_ALIGN_POSES,
    DEFAULT_SEGMENT_LENGTHS,
    RelativeErrorReport,
    Trajectory,
    align_trajectories,
    relative_error,
)
from .simulate import generate_dataset
from .tracker import STATUS_KEYFRAME, Tracker

_EXIT_OK = 0
_EXIT_VALIDATION = 1
_EXIT_IO = 2


class _CliValidationError(MaskVOError):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on bad flags instead of argparse's 2
        raise _CliValidationError(f"{self.prog}: {message}")


def _fmt(value: float) -> str:
    return repr(float(value))


def _build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="maskvo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    p_sim.add_argument("--config", help="INI config file")
    p_sim.add_argument("--out", required=True, help="output dataset directory")
    p_sim.add_argument("--seed", type=int, help="seed override")

    p_run = sub.add_parser("run", help="run the odometry over a dataset")
    p_run.add_argument("dataset", help="dataset directory")
    p_run.add_argument(
        "--mode", choices=["scan_only", "feature_only", "scan_feature"]
    )
    p_run.add_argument("--config", help="INI config file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, help="seed override")

    p_eval = sub.add_parser("eval", help="relative-error report for a trajectory")
    p_eval.add_argument("estimate", help="estimated trajectory CSV")
    p_eval.add_argument("reference", help="ground-truth trajectory CSV")
    p_eval.add_argument(
        "--segments", default=None, help="comma-separated segment lengths in meters"
    )
    p_eval.add_argument("--align-poses", type=int, default=DEFAULT_ALIGN_POSES)
    p_eval.add_argument("--no-align", action="store_true")
    p_eval.add_argument("--out", help="output directory for report.csv and SVGs")

    p_plot = sub.add_parser("plot", help="overlay trajectories into an SVG")
    p_plot.add_argument("trajectories", nargs="+", help="trajectory CSV files")
    p_plot.add_argument("--out", required=True, help="output SVG path")
    return parser


def _overrides(args) -> dict:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        if not 0 <= args.seed < 2**64:
            raise _CliValidationError(
                f"--seed must be a 64-bit unsigned integer, got {args.seed}"
            )
        overrides[("run", "seed")] = args.seed
    if getattr(args, "mode", None) is not None:
        overrides[("run", "mode")] = args.mode
    return overrides


def cmd_simulate(args) -> int:
    config = load_config(args.config, _overrides(args))
    spec = config.trajectory_spec()
    world = config.world()
    os.makedirs(args.out, exist_ok=True)
    n = generate_dataset(
        world,
        spec,
        config.noise_config(),
        args.out,
        size_px=config.get("lidar", "image_size_px"),
        scale=config.get("lidar", "scale_m_per_px"),
        wheelbase=config.get("vehicle", "wheelbase_m"),
        occlusion=config.get("world", "occlusion"),
    )
    config.write(os.path.join(args.out, "effective_config"))
    print(f"wrote {n} frames to {args.out}")
    return _EXIT_OK


def cmd_run(args) -> int:
    config = load_config(args.config, _overrides(args))
    reader = DatasetReader(args.dataset)
    tracker = Tracker(config.tracker_config())
    os.makedirs(args.out, exist_ok=True)
    config.write(os.path.join(args.out, "effective_config"))
    rows = []
    statuses = []
    diag_lines = [
        "frame,timestamp,status,n_features,n_feature_matches,n_feature_inliers,"
        "n_scan_points,n_scan_matches,n_scan_inliers,cost,ba_initial_cost,"
        "ba_final_cost"
    ]
    for frame in reader:
        out = tracker.process(
            frame.index, frame.timestamp, frame.mask, frame.features, frame.odom
        )
        rows.append((out.index, out.timestamp, out.world_pose))
        statuses.append(out.status)
        diag_lines.append(
            f"{out.index},{_fmt(out.timestamp)},{out.status},{out.n_features},"
            f"{out.n_feature_matches},{out.n_feature_inliers},{out.n_scan_points},"
            f"{out.n_scan_matches},{out.n_scan_inliers},"
            f"{'' if math.isnan(out.cost) else _fmt(out.cost)},"
            f"{'' if math.isnan(out.ba_initial_cost) else _fmt(out.ba_initial_cost)},"
            f"{'' if math.isnan(out.ba_final_cost) else _fmt(out.ba_final_cost)}"
        )
    write_pose_csv(os.path.join(args.out, "trajectory.csv"), rows, statuses)
    with open(
        os.path.join(args.out, "diagnostics.csv"), "w", newline="", encoding="ascii"
    ) as f:
        f.write("\n".join(diag_lines) + "\n")
    n_fallback = sum(1 for s in statuses if s == "odometry_fallback")
    print(
        f"tracked {len(rows)} frames ({n_fallback} odometry fallbacks) "
        f"-> {args.out}/trajectory.csv"
    )
    return _EXIT_OK


def _load_trajectory(path: str) -> Trajectory:
    _, timestamps, poses, _ = read_pose_csv(path)
    if len(timestamps) == 0:
        raise DatasetError(f"{path}: no poses")
    return Trajectory(timestamps, poses)


def _report_rows(report: RelativeErrorReport):
    for length in report.segment_lengths:
        for metric, table in (
            ("translation_percent", report.translation_percent),
            ("rotation_deg", report.rotation_deg),
        ):
            if length in table:
                s = table[length]
                yield length, metric, s


def cmd_eval(args) -> int:
    estimate = _load_trajectory(args.estimate)
    reference = _load_trajectory(args.reference)
    if args.segments:
        try:
            lengths = tuple(float(v) for v in args.segments.split(","))
        except ValueError as exc:
            raise _CliValidationError(f"--segments: {exc}") from exc
    else:
        lengths = DEFAULT_SEGMENT_LENGTHS
    if not args.no_align:
        try:
            estimate, _ = align_trajectories(estimate, reference, args.align_poses)
        except EvaluationError as exc:
            raise _CliValidationError(str(exc)) from exc
    report = relative_error(estimate, reference, lengths)
    for length in report.segment_lengths:
        if length in report.translation_percent:
            s = report.translation_percent[length]
            print(f"segment {length:g} m: median translation RE {s.median:.4f} %")
        else:
            print(f"segment {length:g} m: no segments of this length")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(
            os.path.join(args.out, "report.csv"), "w", newline="", encoding="ascii"
        ) as f:
            f.write("segment_length_m,metric,min,q1,median,q3,max,mean\n")
            for length, metric, s in _report_rows(report):
                f.write(
                    f"{_fmt(length)},{metric},{_fmt(s.min)},{_fmt(s.q1)},"
                    f"{_fmt(s.median)},{_fmt(s.q3)},{_fmt(s.max)},{_fmt(s.mean)}\n"
                )
        for metric, table in (
            ("translation_percent", report.translation_percent),
            ("rotation_deg", report.rotation_deg),
        ):
            svg = _boxplot_svg(metric, report.segment_lengths, table)
            with open(
                os.path.join(args.out, f"re_{metric}.svg"),
                "w",
                newline="",
                encoding="ascii",
            ) as f:
                f.write(svg)
    return _EXIT_OK


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _boxplot_svg(metric: str, lengths, table) -> str:
    """Hand-written box plot, one box per segment length."""
    width, height = 480, 320
    margin = 50
    present = [length for length in lengths if length in table]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-size="14">{metric}</text>',
    ]
    if present:
        vmax = max(table[length].max for length in present) or 1.0
        span = width - 2 * margin
        step = span / len(present)

        def ypix(v: float) -> float:
            return height - margin - (v / vmax) * (height - 2 * margin)

        for i, length in enumerate(present):
            s = table[length]
            cx = margin + (i + 0.5) * step
            half = min(18.0, step * 0.3)
            parts.append(
                f'<line x1="{cx:.1f}" y1="{ypix(s.min):.1f}" x2="{cx:.1f}" '
                f'y2="{ypix(s.max):.1f}" stroke="black"/>'
            )
            parts.append(
                f'<rect x="{cx - half:.1f}" y="{ypix(s.q3):.1f}" '
                f'width="{2 * half:.1f}" height="{abs(ypix(s.q1) - ypix(s.q3)):.1f}" '
                f'fill="#cfe2f3" stroke="black"/>'
            )
            parts.append(
                f'<line x1="{cx - half:.1f}" y1="{ypix(s.median):.1f}" '
                f'x2="{cx + half:.1f}" y2="{ypix(s.median):.1f}" '
                f'stroke="#d62728" stroke-width="2"/>'
            )
            parts.append(
                f'<text x="{cx:.1f}" y="{height - margin + 18:.1f}" '
                f'text-anchor="middle" font-size="12">{length:g} m</text>'
            )
        parts.append(
            f'<text x="{margin - 8:.1f}" y="{ypix(vmax) + 4:.1f}" '
            f'text-anchor="end" font-size="11">{vmax:.3g}</text>'
        )
        parts.append(
            f'<text x="{margin - 8:.1f}" y="{ypix(0) + 4:.1f}" '
            f'text-anchor="end" font-size="11">0</text>'
        )
        parts.append(
            f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
            f'y2="{height - margin}" stroke="black"/>'
        )
        parts.append(
            f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
            f'y2="{height - margin}" stroke="black"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_plot(args) -> int:
    data = []
    for path in args.trajectories:
        _, timestamps, poses, statuses = read_pose_csv(path)
        if len(timestamps) == 0:
            raise DatasetError(f"{path}: empty trajectory")
        name = os.path.splitext(os.path.basename(path))[0]
        data.append((name, poses, statuses))
    svg = _trajectories_svg(data)
    out_dir = os.path.dirname(args.out)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    with open(args.out, "w", newline="", encoding="ascii") as f:
        f.write(svg)
    print(f"wrote {args.out}")
    return _EXIT_OK


def _trajectories_svg(data) -> str:
    """Overlay of trajectories: polylines, legend, keyframe markers."""
    width = height = 640
    margin = 40
    all_xy = np.concatenate([poses[:, :2] for _, poses, _ in data], axis=0)
    lo = all_xy.min(axis=0)
    hi = all_xy.max(axis=0)
    span = max(float((hi - lo).max()), 1e-9)
    pad = 0.05 * span
    lo = lo - pad
    span = span + 2 * pad
    scale = (width - 2 * margin) / span

    def to_px(xy):
        # world +x up, +y left to match the vehicle frame convention
        px = width - margin - (xy[:, 1] - lo[1]) * scale
        py = height - margin - (xy[:, 0] - lo[0]) * scale
        return px, py

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">'
    ]
    for i, (name, poses, statuses) in enumerate(data):
        color = _PALETTE[i % len(_PALETTE)]
        px, py = to_px(poses[:, :2])
        points = " ".join(f"{x:.3f},{y:.3f}" for x, y in zip(px, py))
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        if statuses is not None:
            for k, status in enumerate(statuses):
                if status == STATUS_KEYFRAME:
                    parts.append(
                        f'<circle cx="{px[k]:.3f}" cy="{py[k]:.3f}" r="2.5" '
                        f'fill="none" stroke="{color}"/>'
                    )
        parts.append(
            f'<line x1="{margin}" y1="{margin + 16 * i + 6}" '
            f'x2="{margin + 24}" y2="{margin + 16 * i + 6}" stroke="{color}" '
            f'stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{margin + 30}" y="{margin + 16 * i + 10}" '
            f'font-size="12">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "plot":
            return cmd_plot(args)
        raise _CliValidationError(f"unknown command {args.command!r}")
    except (_CliValidationError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_VALIDATION
    except (DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
