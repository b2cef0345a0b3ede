"""Benchmark the numba kernels against the pure-numpy fallback.

Usage:
    python3 benchmarks/bench_accel.py [--repeats N] [--size PX]

Each kernel runs on a representative input (a rendered 384x384 parking
mask, 500-feature descriptor sets, full 360-point scans); the table reports
the best wall time per call for both backends and the speedup.
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from maskvo.accel import numba_backend, numpy_backend
from maskvo.geometry import Pose2
from maskvo.simulate import NoiseConfig, build_world, render_mask


def best_time(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_inputs(size):
    obstacles = [
        np.array([[2.0, -1.0], [4.0, -1.0], [4.0, 1.0], [2.0, 1.0]]),
        np.array([[-3.0, 2.0], [-1.5, 2.0], [-1.5, 4.5], [-3.0, 4.5]]),
        np.array([[-4.0, -4.5], [-2.0, -4.5], [-2.0, -3.0], [-4.0, -3.0]]),
    ]
    world = build_world((-7.5, -7.5, 7.5, 7.5), obstacles, landmark_density=0.0, seed=1)
    scale = 15.0 / size
    mask = render_mask(world, Pose2(), size, scale, NoiseConfig.noiseless(1), 0)
    free = np.asarray(mask.free)
    rng = np.random.default_rng(2)
    desc_a = rng.integers(0, 2**64, (2000, 4), dtype=np.uint64)
    desc_b = rng.integers(0, 2**64, (2000, 4), dtype=np.uint64)
    query = rng.uniform(-7, 7, (360, 2))
    refs = rng.uniform(-7, 7, (360, 2))
    bins = rng.integers(0, 360, 3000)
    ranges = rng.random(3000)
    order = rng.permutation(3000).astype(np.int64)
    verts, offsets = world.packed_obstacles
    bounds = np.asarray(world.bounds, dtype=float)
    return {
        "free": free,
        "obstacle": ~free,
        "desc": (desc_a, desc_b),
        "nn": (query, refs),
        "bins": (bins, ranges, order),
        "render": (size, scale, verts, offsets, bounds),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--size", type=int, default=384)
    args = parser.parse_args()

    inputs = build_inputs(args.size)
    free = inputs["free"]
    obstacle = inputs["obstacle"]
    eroded = numpy_backend.erode_obstacles(obstacle, 2)
    boundary = numpy_backend.contour_pixels(free)
    desc_a, desc_b = inputs["desc"]
    query, refs = inputs["nn"]
    bins, ranges, order = inputs["bins"]
    size, scale, verts, offsets, bounds = inputs["render"]

    cases = [
        ("erode 2x2", lambda b: b.erode_obstacles(obstacle, 2)),
        ("dilate 2x2", lambda b: b.dilate_obstacles(eroded, 2)),
        ("components", lambda b: b.small_component_mask(obstacle, 50)),
        ("contour pixels", lambda b: b.contour_pixels(free)),
        ("trace paths", lambda b: b.trace_paths(boundary)),
        ("bin minima", lambda b: b.select_min_per_bin(bins, ranges, order, 360)),
        ("nearest two", lambda b: b.nearest_two(query, refs)),
        ("hamming 2000", lambda b: b.hamming_pairs(desc_a, desc_b)),
        (
            "render mask",
            lambda b: b.render_free(
                size, scale, 0.0, 0.0, 0.3, verts, offsets, bounds, True
            ),
        ),
    ]

    print(f"{'kernel':<16}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name, call in cases:
        call(numba_backend)  # jit warmup
        t_np = best_time(lambda: call(numpy_backend), args.repeats)
        t_nb = best_time(lambda: call(numba_backend), args.repeats)
        print(
            f"{name:<16}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms"
            f"{t_np / t_nb:>9.1f}x"
        )


if __name__ == "__main__":
    main()
