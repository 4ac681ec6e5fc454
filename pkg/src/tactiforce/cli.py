"""Command-line interface.

Subcommands::

    tactiforce train        synthesise a dataset and train the normal MLP
    tactiforce calibrate    run a press sequence and fit the force curve
    tactiforce reconstruct  batch frames -> depth maps (+ forces)
    tactiforce simulate     run a scripted teleop scenario to a telemetry log
    tactiforce serve        start the live bus + teleop loop
    tactiforce bench        measure pipeline throughput per kernel backend

Exit codes: 0 success, 2 usage/validation errors, 1 runtime failures.
Artifacts embed the resolved config fingerprint; none of them embed wall
clock time, so identical inputs produce identical bytes (the benchmark
report and reconstruct timing fields are the deliberate exceptions).
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

from .errors import TactiforceError

# ---------------------------------------------------------------------------
# argparse helpers


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return value


def _hidden_sizes(text: str) -> tuple[int, int]:
    try:
        parts = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected H1,H2")
    if len(parts) != 2 or any(p < 1 for p in parts):
        raise argparse.ArgumentTypeError("expected two positive sizes H1,H2")
    return parts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tactiforce",
        description="Vision-based tactile force estimation and teleoperation tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, default=None, help="TOML config file")

    p = sub.add_parser("train", help="train the surface-normal MLP on synthetic presses")
    add_config(p)
    p.add_argument("--out", type=Path, required=True, help="checkpoint output path (.mlp)")
    p.add_argument("--images", type=_positive_int, default=None, help="total dataset images")
    p.add_argument("--epochs", type=_positive_int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hidden", type=_hidden_sizes, default=None, metavar="H1,H2")
    p.add_argument("--quiet", action="store_true", help="suppress per-epoch loss lines")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="press sequence -> cubic depth/force curve")
    add_config(p)
    p.add_argument("--out", type=Path, required=True, help="curve JSON output path")
    p.add_argument("--checkpoint", type=Path, default=None,
                   help="trained MLP; omit to calibrate against true depth maps")
    p.add_argument("--samples", type=Path, default=None, help="also write samples CSV here")
    p.add_argument("--steps", type=_positive_int, default=None)
    p.add_argument("--step-depth", type=_positive_float, default=None, metavar="MM")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("reconstruct", help="batch TFR1 frames -> depth maps and forces")
    add_config(p)
    p.add_argument("frames", type=Path, nargs="+", help="input frame .tfr files")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--curve", type=Path, default=None, help="force curve JSON (enables forces)")
    p.add_argument("--out-dir", type=Path, default=None, help="write <name>_depth.tfr here")
    p.add_argument("--png", action="store_true", help="also write depth preview PNGs")
    p.add_argument("--out", type=Path, default=None, help="write JSONL records here (default stdout)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("simulate", help="run a scripted teleop scenario")
    add_config(p)
    p.add_argument("--scenario", type=Path, default=None,
                   help="scenario JSON (default: bundled contact demo)")
    p.add_argument("--out", type=Path, default=None, help="telemetry JSONL output")
    p.add_argument("--feedback", choices=["auto", "on", "off"], default="auto",
                   help="force feedback handling (auto = per-region flags)")
    p.add_argument("--sensing", choices=["auto", "oracle", "full"], default="auto")
    p.add_argument("--checkpoint", type=Path, default=None, help="MLP for full sensing")
    p.add_argument("--curve", type=Path, default=None, help="force curve for full sensing")
    p.add_argument("--metrics", action="store_true", help="print per-region metrics JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="start the telemetry bus and live teleop loop")
    add_config(p)
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--checkpoint", type=Path, default=None, help="MLP for full sensing")
    p.add_argument("--curve", type=Path, default=None, help="force curve for full sensing")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="measure full-pipeline throughput")
    add_config(p)
    p.add_argument("--frames", type=_positive_int, default=None)
    p.add_argument("--backend", choices=["numpy", "compiled", "all"], default="all")
    p.add_argument("--out", type=Path, default=None, help="write the JSON report here")
    p.set_defaults(func=cmd_bench)

    return parser


def _load_config(args):
    from .config import Config

    return Config.load(args.config)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_train(args) -> int:
    import numpy as np

    from .dataset import make_calib_dataset
    from .mlp import forward, mse_loss, save_checkpoint, train

    cfg = _load_config(args)
    if args.images is not None:
        cfg.override("mlp", "images", args.images)
    if args.epochs is not None:
        cfg.override("mlp", "epochs", args.epochs)
    if args.seed is not None:
        cfg.override("mlp", "seed", args.seed)
    if args.hidden is not None:
        cfg.override("mlp", "hidden", list(args.hidden))

    gel = cfg.gel()
    lighting = cfg.lighting()
    tcfg = cfg.train()
    mlp_cfg = cfg["mlp"]
    n_images = int(mlp_cfg["images"])
    holdout_images = int(mlp_cfg["holdout_images"])
    if holdout_images >= n_images:
        raise TactiforceError(
            f"holdout_images ({holdout_images}) must be smaller than images ({n_images})"
        )
    ball = float(mlp_cfg["ball_diameter_mm"])

    data = make_calib_dataset(
        gel, lighting, n_images - holdout_images, ball_diameter=ball, seed=tcfg.seed
    )
    if not args.quiet:
        print(
            f"dataset: {n_images - holdout_images} images, {len(data)} samples, "
            f"fingerprint {data.fingerprint()[:16]}"
        )

    callback = None if args.quiet else (
        lambda epoch, loss: print(f"epoch {epoch + 1}/{tcfg.epochs}  loss {loss:.6e}")
    )
    params, losses = train(data, tcfg, epoch_callback=callback)

    holdout = make_calib_dataset(
        gel, lighting, holdout_images, ball_diameter=ball, seed=tcfg.seed + 1000
    )
    holdout_mse = mse_loss(forward(params, holdout.inputs), holdout.targets)
    print(f"holdout mse over {holdout_images} images: {holdout_mse:.6e}")

    meta = {
        "train_config": asdict(tcfg) | {"hidden": list(tcfg.hidden)},
        "images": n_images,
        "holdout_images": holdout_images,
        "ball_diameter_mm": ball,
        "dataset_fingerprint": data.fingerprint(),
        "config_fingerprint": cfg.fingerprint(),
        "final_train_loss": losses[-1],
        "holdout_mse": holdout_mse,
    }
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(args.out, params, meta)
    print(f"checkpoint written to {args.out}")
    return 0


def _pipeline_from_files(cfg, checkpoint: Path, curve: Path | None):
    from .calibration import PolyCurve
    from .mlp import load_checkpoint
    from .pipeline import ForcePipeline

    params, _meta = load_checkpoint(checkpoint)
    poly = PolyCurve.load(curve) if curve is not None else None
    gel = cfg.gel()
    return ForcePipeline(
        params,
        poly,
        gel.height_px,
        gel.width_px,
        gel.pixel_pitch,
        nz_floor=float(cfg["solver"]["nz_floor"]),
        median_filter=bool(cfg["solver"]["median_filter"]),
        solver_method=str(cfg["solver"]["method"]),
    )


def cmd_calibrate(args) -> int:
    from .calibration import fit_poly3, run_calibration, save_samples_csv
    from .gel import CylinderCurved

    cfg = _load_config(args)
    if args.steps is not None:
        cfg.override("calibration", "steps", args.steps)
    if args.step_depth is not None:
        cfg.override("calibration", "step_depth_mm", args.step_depth)

    cal = cfg["calibration"]
    estimator = None
    if args.checkpoint is not None:
        estimator = _pipeline_from_files(cfg, args.checkpoint, None).estimate_depth

    samples = run_calibration(
        cfg.gel(),
        cfg.lighting(),
        shape=CylinderCurved(
            radius=float(cal["probe_radius_mm"]), cap_radius=float(cal["probe_cap_radius_mm"])
        ),
        steps=int(cal["steps"]),
        step_depth=float(cal["step_depth_mm"]),
        material=cfg.material(),
        depth_estimator=estimator,
    )
    curve = fit_poly3(samples)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    curve.save(args.out, extra={"config_fingerprint": cfg.fingerprint()})
    if args.samples is not None:
        save_samples_csv(args.samples, samples)
    mode = "pipeline" if estimator is not None else "oracle depth"
    print(f"fitted cubic from {len(samples)} presses ({mode}); r_squared = {curve.r_squared:.6f}")
    print(f"curve written to {args.out}")
    return 0


def cmd_reconstruct(args) -> int:
    import numpy as np

    from .calibration import eval_force
    from .fields import TactileFrame, write_png, write_tfr
    from .poisson import max_depth

    cfg = _load_config(args)
    pipeline = _pipeline_from_files(cfg, args.checkpoint, args.curve)
    if args.out_dir is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)

    out_fh = open(args.out, "w") if args.out is not None else None
    try:
        for path in args.frames:
            t0 = time.perf_counter()
            frame = TactileFrame.load(path)
            dm = pipeline.depth_map(frame)
            depth = max_depth(dm, median_filter=pipeline.median_filter)
            record = {
                "frame": path.name,
                "depth_mm": depth,
                "t_wall_ms": (time.perf_counter() - t0) * 1e3,
            }
            if pipeline.curve is not None:
                force, clamped = eval_force(pipeline.curve, depth)
                record["force_n"] = force
                record["clamped"] = clamped
            if args.out_dir is not None:
                stem = path.stem
                write_tfr(args.out_dir / f"{stem}_depth.tfr", dm.values)
                if args.png:
                    peak = float(dm.values.max())
                    grey = dm.values / peak if peak > 0 else dm.values
                    write_png(args.out_dir / f"{stem}_depth.png", np.stack([grey] * 3, axis=-1))
            line = json.dumps(record)
            if out_fh is not None:
                out_fh.write(line + "\n")
            else:
                print(line)
    finally:
        if out_fh is not None:
            out_fh.close()
    return 0


def cmd_simulate(args) -> int:
    from .teleop import (
        ContactModel,
        Scenario,
        TeleopModels,
        VisionSensor,
        bundled_scenario_path,
        region_metrics,
        run_scenario,
    )

    cfg = _load_config(args)
    scenario_path = args.scenario if args.scenario is not None else bundled_scenario_path()
    scenario = Scenario.from_json(scenario_path)

    base = cfg.teleop_models()
    models = TeleopModels(
        follower=base.follower,
        operator=base.operator,
        contact=ContactModel(
            object_halfwidth=scenario.object_halfwidth,
            material=base.contact.material,
            max_indent=base.contact.max_indent,
        ),
    )

    sensing = scenario.sensing if args.sensing == "auto" else args.sensing
    sensor = None
    if sensing == "full":
        if args.checkpoint is None or args.curve is None:
            raise TactiforceError("full sensing requires --checkpoint and --curve")
        pipeline = _pipeline_from_files(cfg, args.checkpoint, args.curve)
        sensor = VisionSensor(cfg.gel(), cfg.lighting(), pipeline)

    feedback_override = {"auto": None, "on": True, "off": False}[args.feedback]
    log = run_scenario(scenario, models, sensor=sensor, feedback_override=feedback_override)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        log.save_jsonl(args.out)
        print(f"{len(log)} records written to {args.out}")
    if args.metrics:
        metrics = {}
        for region in scenario.regions:
            try:
                metrics[region.name] = region_metrics(log, region.name)
            except TactiforceError:
                pass
        print(json.dumps(metrics, indent=2, sort_keys=True))
    if args.out is None and not args.metrics:
        print(f"scenario {scenario.name!r}: {len(log)} records (use --out/--metrics)")
    return 0


def cmd_serve(args) -> int:
    from .bus import resolve_bus_address
    from .serve import serve_forever

    cfg = _load_config(args)
    if (args.checkpoint is None) != (args.curve is None):
        raise TactiforceError("full sensing requires both --checkpoint and --curve")
    pipeline = None
    if args.checkpoint is not None:
        pipeline = _pipeline_from_files(cfg, args.checkpoint, args.curve)
    host, port = resolve_bus_address(
        args.host,
        args.port,
        default_host=str(cfg["bus"]["host"]),
        default_port=int(cfg["bus"]["port"]),
    )
    try:
        asyncio.run(serve_forever(cfg, host, port, pipeline=pipeline))
    except KeyboardInterrupt:
        pass
    return 0


def cmd_bench(args) -> int:
    from . import kernels
    from .bench import run_bench

    cfg = _load_config(args)
    if args.backend == "all":
        backends = sorted(kernels.available_backends())
    else:
        if args.backend not in kernels.available_backends():
            raise TactiforceError(f"kernel backend {args.backend!r} is not available")
        backends = [args.backend]
    report = run_bench(cfg, frames_override=args.frames, backends=backends)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out is not None:
        args.out.write_text(text + "\n")
    print(text)
    return 0


# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TactiforceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
