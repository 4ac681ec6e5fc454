"""Shared fixtures.

The expensive piece is ``trained_rig``: a small synthetic sensor rig with an
MLP trained on analytic sphere-press labels.  Training takes ~15 s, so it is
session-scoped and shared by the MLP, pipeline, calibration, and acceptance
tests.  Everything about it is seeded and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from tactiforce.calibration import PolyCurve, fit_poly3, run_calibration
from tactiforce.dataset import make_calib_dataset
from tactiforce.gel import (
    GelConfig,
    HertzParams,
    Indenter,
    LightingModel,
    Sphere,
    default_lighting,
    indent_depth,
    normals_from_depth,
    render,
)
from tactiforce.mlp import MlpParams, TrainConfig, TrainingSet, params_float32, train
from tactiforce.pipeline import ForcePipeline


@dataclass
class TrainedRig:
    gel: GelConfig
    lighting: LightingModel
    dataset: TrainingSet
    train_config: TrainConfig
    params: MlpParams          # float64, as trained
    params32: MlpParams        # inference copy
    oracle_curve: PolyCurve    # fitted from true depths
    full_curve: PolyCurve      # fitted from MLP+Poisson depth estimates
    pipeline: ForcePipeline    # no curve attached (depth only)
    force_pipeline: ForcePipeline  # full_curve attached

    def press_frame(self, press_depth: float, center=None):
        """Render a sphere press (6 mm ball) on this rig."""
        ind = Indenter(
            Sphere(radius=3.0),
            center=self.gel.center if center is None else center,
            press_depth=press_depth,
        )
        depth = indent_depth(self.gel, ind)
        return render(normals_from_depth(depth), self.lighting)


@pytest.fixture(scope="session")
def trained_rig() -> TrainedRig:
    gel = GelConfig(width_px=160, height_px=120, pixel_pitch=0.1, smoothing_sigma=1.0)
    lighting = default_lighting()
    dataset = make_calib_dataset(gel, lighting, n_images=12, ball_diameter=6.0, seed=0)
    cfg = TrainConfig(
        hidden=(64, 64), lr=1e-3, dropout_rate=0.0, epochs=40, batch_size=4096, seed=0
    )
    params, _ = train(dataset, cfg)
    params32 = params_float32(params)

    pipeline = ForcePipeline(
        params32,
        curve=None,
        height=gel.height_px,
        width=gel.width_px,
        pixel_pitch=gel.pixel_pitch,
    )
    material = HertzParams()
    oracle_curve = fit_poly3(run_calibration(gel, lighting, material=material))
    full_curve = fit_poly3(
        run_calibration(
            gel, lighting, material=material, depth_estimator=pipeline.estimate_depth
        )
    )
    force_pipeline = ForcePipeline(
        params32,
        curve=full_curve,
        height=gel.height_px,
        width=gel.width_px,
        pixel_pitch=gel.pixel_pitch,
    )
    return TrainedRig(
        gel=gel,
        lighting=lighting,
        dataset=dataset,
        train_config=cfg,
        params=params,
        params32=params32,
        oracle_curve=oracle_curve,
        full_curve=full_curve,
        pipeline=pipeline,
        force_pipeline=force_pipeline,
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
