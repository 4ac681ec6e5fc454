"""Throughput benchmark for the full frame -> force pipeline.

Frames are pre-rendered (a small pool of distinct presses cycled to the
requested count, so frame generation does not distort the timing), then the
pipeline runs over them single-threaded while per-stage wall times are
collected.  When both kernel backends are importable the benchmark runs
each and reports them side by side.
"""

from __future__ import annotations

import time

import numpy as np

from . import kernels
from .calibration import PolyCurve
from .config import Config
from .gel import GelConfig, Indenter, LightingModel, Sphere, indent_depth, normals_from_depth, render
from .mlp import FEATURES, OUTPUTS, MlpParams
from .pipeline import ForcePipeline


def generate_frames(
    cfg: GelConfig,
    lighting: LightingModel,
    count: int,
    distinct: int = 30,
    ball_diameter: float = 6.0,
    seed: int = 0,
) -> list:
    """``count`` frames cycled from ``distinct`` random sphere presses."""
    rng = np.random.default_rng(seed)
    radius = ball_diameter / 2.0
    margin = 2 * cfg.pixel_pitch
    pool = []
    for i in range(min(distinct, count)):
        depth = float(rng.uniform(0.15 * cfg.max_indent, 0.8 * cfg.max_indent))
        r_c = Sphere(radius).contact_radius(depth)
        cx = float(rng.uniform(margin + r_c, cfg.width_mm - margin - r_c))
        cy = float(rng.uniform(margin + r_c, cfg.height_mm - margin - r_c))
        dm = indent_depth(cfg, Indenter(Sphere(radius), (cx, cy), depth))
        pool.append(render(normals_from_depth(dm), lighting, frame_id=i))
    return [pool[i % len(pool)] for i in range(count)]


def _percentiles(samples: list[float]) -> dict:
    arr = np.array(samples, dtype=np.float64)
    return {"p50": float(np.percentile(arr, 50)), "p95": float(np.percentile(arr, 95))}


def bench_pipeline(pipeline: ForcePipeline, frames: list) -> dict:
    """Run every frame through the pipeline; returns fps and stage stats."""
    stages: dict[str, list[float]] = {}
    totals: list[float] = []
    t_start = time.perf_counter()
    for frame in frames:
        t0 = time.perf_counter()
        pipeline.process(frame)
        totals.append((time.perf_counter() - t0) * 1e3)
        for stage, ms in pipeline.last_timings.items():
            stages.setdefault(stage, []).append(ms)
    elapsed = time.perf_counter() - t_start
    return {
        "frames": len(frames),
        "elapsed_s": elapsed,
        "fps": len(frames) / elapsed,
        "total_ms": _percentiles(totals),
        "stages_ms": {k: _percentiles(v) for k, v in sorted(stages.items())},
    }


def _timing_params(seed: int = 0, hidden: tuple[int, int] = (48, 48)) -> MlpParams:
    # Untrained weights time identically to trained ones; the benchmark
    # measures throughput, not accuracy.
    rng = np.random.default_rng(seed)
    return MlpParams.init((FEATURES, *hidden, OUTPUTS), rng)


def _timing_curve() -> PolyCurve:
    return PolyCurve(
        p1=0.0, p2=0.0, p3=8.0, p4=0.0, r_squared=1.0, d_min=0.0, d_max=2.0, depth_scale=2.0
    )


def run_bench(
    config: Config,
    params: MlpParams | None = None,
    curve: PolyCurve | None = None,
    frames_override: int | None = None,
    backends: list[str] | None = None,
) -> dict:
    """Full benchmark report across the requested kernel backends."""
    gel = config.gel()
    lighting = config.lighting()
    bench_cfg = config["bench"]
    count = frames_override if frames_override is not None else int(bench_cfg["frames"])
    frames = generate_frames(
        gel,
        lighting,
        count=count,
        distinct=int(bench_cfg["distinct_frames"]),
        ball_diameter=float(config["mlp"]["ball_diameter_mm"]),
        seed=int(bench_cfg["seed"]),
    )
    if params is None:
        params = _timing_params(hidden=tuple(int(h) for h in config["mlp"]["hidden"]))
    if curve is None:
        curve = _timing_curve()

    available = kernels.available_backends()
    chosen = backends if backends is not None else sorted(available)
    original = kernels.BACKEND
    results: dict[str, dict] = {}
    try:
        for name in chosen:
            kernels.use(name)
            pipeline = ForcePipeline(
                params,
                curve,
                gel.height_px,
                gel.width_px,
                gel.pixel_pitch,
                nz_floor=float(config["solver"]["nz_floor"]),
                median_filter=bool(config["solver"]["median_filter"]),
                solver_method=str(config["solver"]["method"]),
            )
            pipeline.process(frames[0])  # warm caches and plans before timing
            results[name] = bench_pipeline(pipeline, frames)
    finally:
        kernels.use(original)

    return {
        "resolution": [gel.height_px, gel.width_px],
        "pixel_pitch_mm": gel.pixel_pitch,
        "n_frames": len(frames),
        "config_fingerprint": config.fingerprint(),
        "default_backend": original,
        "backends": results,
    }
