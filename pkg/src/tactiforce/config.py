"""TOML configuration for the CLI and services.

A config file may override any subset of the defaults below; unknown keys
are a hard error (a typo that silently reverts to a default is the worst
kind of config bug).  The fully-resolved config has a stable fingerprint
(sha256 of its sorted JSON) that artifacts embed, so every checkpoint,
curve and benchmark report can be traced to the exact configuration that
produced it.
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .gel import GelConfig, HertzParams, default_lighting
from .mlp import TrainConfig
from .teleop import ContactModel, FollowerModel, OperatorModel, TeleopModels

DEFAULTS: dict[str, dict[str, Any]] = {
    "gel": {
        "width_px": 320,
        "height_px": 240,
        "pixel_pitch_mm": 0.05,
        "max_indent_mm": 1.25,
        "smoothing_sigma_px": 2.0,
    },
    "lighting": {
        "azimuths_deg": [0.0, 120.0, 240.0],
        "elevation_deg": 45.0,
        "gain": 0.6,
        "ambient": 0.25,
    },
    "mlp": {
        "hidden": [48, 48],
        "lr": 1e-3,
        "dropout_rate": 0.05,
        "epochs": 50,
        "batch_size": 4096,
        "seed": 0,
        "images": 40,
        "holdout_images": 4,
        "ball_diameter_mm": 6.0,
    },
    "solver": {
        "nz_floor": 0.05,
        "median_filter": True,
        "method": "auto",
    },
    "calibration": {
        "steps": 25,
        "step_depth_mm": 0.04,
        "probe_radius_mm": 5.0,
        "probe_cap_radius_mm": 9.0,
        "hertz_k": 8.0,
    },
    "teleop": {
        "control_rate_hz": 1000.0,
        "sensor_rate_hz": 30.0,
        "mass_kg": 0.1,
        "kp": 2000.0,
        "kd": 20.0,
        "hand_stiffness": 250.0,
        "hand_relax_time_s": 0.25,
        "aperture_min_m": 0.0,
        "aperture_max_m": 0.05,
        "object_halfwidth_m": 0.010,
    },
    "bus": {
        "host": "127.0.0.1",
        "port": 8765,
        "state_rate_hz": 60.0,
        "frame_rate_hz": 30.0,
    },
    "bench": {
        "frames": 300,
        "distinct_frames": 30,
        "seed": 0,
    },
}


def _merge(defaults: dict, overrides: dict, path: str) -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {here!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {here!r} must be a table")
            merged[key] = _merge(defaults[key], value, here)
        else:
            if isinstance(value, dict):
                raise ConfigError(f"config key {here!r} must be a value, not a table")
            merged[key] = value
    return merged


class Config:
    """A resolved configuration tree with typed accessors."""

    def __init__(self, tree: dict[str, Any]):
        self.tree = tree

    @classmethod
    def default(cls) -> "Config":
        return cls(copy.deepcopy(DEFAULTS))

    @classmethod
    def load(cls, path: str | Path | None) -> "Config":
        if path is None:
            return cls.default()
        try:
            with open(path, "rb") as fh:
                overrides = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}")
        return cls(_merge(DEFAULTS, overrides, ""))

    def override(self, section: str, key: str, value: Any) -> None:
        """Apply one command-line override (flags beat file values)."""
        if section not in self.tree or key not in self.tree[section]:
            raise ConfigError(f"unknown config key {section}.{key!r}")
        self.tree[section][key] = value

    def fingerprint(self) -> str:
        blob = json.dumps(self.tree, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    # -- typed views ---------------------------------------------------------

    def gel(self) -> GelConfig:
        g = self.tree["gel"]
        return GelConfig(
            width_px=int(g["width_px"]),
            height_px=int(g["height_px"]),
            pixel_pitch=float(g["pixel_pitch_mm"]),
            max_indent=float(g["max_indent_mm"]),
            smoothing_sigma=float(g["smoothing_sigma_px"]),
        )

    def lighting(self):
        l = self.tree["lighting"]
        azimuths = tuple(float(a) for a in l["azimuths_deg"])
        if len(azimuths) != 3:
            raise ConfigError("lighting.azimuths_deg must list exactly 3 angles")
        return default_lighting(
            azimuths_deg=azimuths,
            elevation_deg=float(l["elevation_deg"]),
            gain=float(l["gain"]),
            ambient=float(l["ambient"]),
        )

    def train(self) -> TrainConfig:
        m = self.tree["mlp"]
        hidden = tuple(int(h) for h in m["hidden"])
        if len(hidden) != 2:
            raise ConfigError("mlp.hidden must list exactly 2 sizes")
        return TrainConfig(
            hidden=hidden,
            lr=float(m["lr"]),
            dropout_rate=float(m["dropout_rate"]),
            epochs=int(m["epochs"]),
            batch_size=int(m["batch_size"]),
            seed=int(m["seed"]),
        )

    def material(self) -> HertzParams:
        return HertzParams(k=float(self.tree["calibration"]["hertz_k"]))

    def teleop_models(self) -> TeleopModels:
        t = self.tree["teleop"]
        return TeleopModels(
            follower=FollowerModel(
                mass=float(t["mass_kg"]),
                kp=float(t["kp"]),
                kd=float(t["kd"]),
                aperture_min=float(t["aperture_min_m"]),
                aperture_max=float(t["aperture_max_m"]),
            ),
            operator=OperatorModel(
                hand_stiffness=float(t["hand_stiffness"]),
                hand_relax_time=float(t["hand_relax_time_s"]),
            ),
            contact=ContactModel(
                object_halfwidth=float(t["object_halfwidth_m"]),
                material=self.material(),
                max_indent=float(self.tree["gel"]["max_indent_mm"]),
            ),
        )

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.tree[section]
