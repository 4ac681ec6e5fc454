"""Synthetic supervised dataset for the normal-estimation network.

A rigid calibration ball is pressed into the simulated gel at seeded-random
positions and depths; every pixel of every rendered frame becomes one
training sample.  Inputs are (r, g, b, x_norm, y_norm); labels are the
*analytic* sphere normals (the ball's own outward normal inside the contact
disc, flat ``(0, 0, 1)`` outside), not the finite-difference normals of the
smoothed depth map -- the ball's known geometry is the whole point of using
it as a calibration target.
"""

from __future__ import annotations

from dataclasses import asdict

import numpy as np

from .errors import GeometryError
from .gel import (
    BORDER_MARGIN_PX,
    GelConfig,
    Indenter,
    LightingModel,
    Sphere,
    indent_depth,
    normals_from_depth,
    render,
    sphere_normals_analytic,
)
from .mlp import FEATURES, OUTPUTS, TrainingSet, frame_features


def make_calib_dataset(
    cfg: GelConfig,
    lighting: LightingModel,
    n_images: int,
    ball_diameter: float = 6.0,
    seed: int = 0,
    depth_range: tuple[float, float] | None = None,
) -> TrainingSet:
    """Render ``n_images`` random ball presses into per-pixel samples.

    ``depth_range`` bounds the press depths in mm; the default spans 10% to
    85% of the gel's indentation budget.  Deterministic for a given seed.
    """
    if n_images < 1:
        raise GeometryError("n_images must be >= 1")
    radius = ball_diameter / 2.0
    if depth_range is None:
        depth_range = (0.1 * cfg.max_indent, 0.85 * cfg.max_indent)
    lo, hi = depth_range
    if not 0.0 <= lo <= hi:
        raise GeometryError(f"invalid depth_range {depth_range}")
    if hi > cfg.max_indent or hi > radius:
        raise GeometryError(
            f"depth_range top {hi} mm exceeds max_indent ({cfg.max_indent}) or ball radius ({radius})"
        )

    rng = np.random.default_rng(seed)
    margin = BORDER_MARGIN_PX * cfg.pixel_pitch
    px_count = cfg.height_px * cfg.width_px
    inputs = np.empty((n_images * px_count, FEATURES), dtype=np.float64)
    targets = np.empty((n_images * px_count, OUTPUTS), dtype=np.float64)
    presses: list[dict] = []

    for i in range(n_images):
        depth = float(rng.uniform(lo, hi))
        r_c = Sphere(radius).contact_radius(depth)
        x_lo, x_hi = margin + r_c, cfg.width_mm - margin - r_c
        y_lo, y_hi = margin + r_c, cfg.height_mm - margin - r_c
        if x_lo >= x_hi or y_lo >= y_hi:
            raise GeometryError(
                f"ball footprint (radius {r_c:.2f} mm) cannot fit the gel plane"
            )
        center = (float(rng.uniform(x_lo, x_hi)), float(rng.uniform(y_lo, y_hi)))

        dm = indent_depth(cfg, Indenter(Sphere(radius), center, depth))
        frame = render(normals_from_depth(dm), lighting, frame_id=i)
        feats = frame_features(frame.pixels)
        labels = sphere_normals_analytic(cfg, center, radius, depth)

        sl = slice(i * px_count, (i + 1) * px_count)
        inputs[sl] = feats.astype(np.float64)
        targets[sl] = labels.reshape(px_count, OUTPUTS)
        presses.append({"center": list(center), "depth": depth})

    meta = {
        "gel": asdict(cfg),
        "n_images": n_images,
        "ball_diameter": ball_diameter,
        "seed": seed,
        "depth_range": list(depth_range),
        "presses": presses,
    }
    return TrainingSet(inputs=inputs, targets=targets, meta=meta)
