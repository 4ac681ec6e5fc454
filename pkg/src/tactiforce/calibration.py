"""Depth-to-force calibration: cubic polynomial fit and evaluation.

A monotone sequence of probe presses pairs reconstructed peak depth with
ground-truth normal force.  A cubic ``F = p1 d^3 + p2 d^2 + p3 d + p4`` is
fitted by linear least squares on depths rescaled to [0, 1] (plain
Vandermonde on millimetre depths is needlessly ill-conditioned), then mapped
back to physical coefficients.

Evaluation clamps the queried depth to the curve's validity range and floors
the force at zero.  The validity range starts at depth 0 rather than at the
shallowest sample: contact forces vanish at zero depth, the cubic's
extrapolation over that last fraction of a millimetre is benign, and
no-contact frames must report ~0 N rather than the force of the shallowest
calibration press.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateFitError, GeometryError
from .fields import TactileFrame
from .gel import (
    CylinderCurved,
    GelConfig,
    HertzParams,
    Indenter,
    IndenterShape,
    LightingModel,
    indent_depth,
    normals_from_depth,
    render,
    truth_force,
)

#: r_squared convention for zero-variance targets: a perfect fit of a
#: constant is reported as 1, anything else as 0.
_VARIANCE_TINY = 1e-30


@dataclass(frozen=True)
class CalibSample:
    """One calibration press: estimated peak depth vs ground-truth force."""

    depth_mm: float
    force_n: float


@dataclass(frozen=True)
class PolyCurve:
    """Cubic depth->force curve with its fit quality and validity range."""

    p1: float
    p2: float
    p3: float
    p4: float
    r_squared: float
    d_min: float
    d_max: float
    depth_scale: float

    def to_dict(self) -> dict:
        return {
            "p1": self.p1,
            "p2": self.p2,
            "p3": self.p3,
            "p4": self.p4,
            "r_squared": self.r_squared,
            "d_min": self.d_min,
            "d_max": self.d_max,
            "depth_scale": self.depth_scale,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolyCurve":
        fields = ("p1", "p2", "p3", "p4", "r_squared", "d_min", "d_max", "depth_scale")
        missing = [f for f in fields if f not in data]
        if missing:
            raise DegenerateFitError(f"curve JSON missing fields: {missing}")
        return cls(**{f: float(data[f]) for f in fields})

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "PolyCurve":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_poly3(samples: list[CalibSample]) -> PolyCurve:
    """Least-squares cubic through the calibration samples.

    Raises :class:`DegenerateFitError` for fewer than four samples or fewer
    than four distinct depths.  Solved via SVD (numpy lstsq) on unit-scaled
    depths, never via normal equations.
    """
    if len(samples) < 4:
        raise DegenerateFitError(f"need >= 4 samples for a cubic, got {len(samples)}")
    depths = np.array([s.depth_mm for s in samples], dtype=np.float64)
    forces = np.array([s.force_n for s in samples], dtype=np.float64)
    if len(np.unique(depths)) < 4:
        raise DegenerateFitError("need >= 4 distinct depths for a cubic")
    if not (np.all(np.isfinite(depths)) and np.all(np.isfinite(forces))):
        raise DegenerateFitError("samples contain non-finite values")

    scale = float(depths.max())
    if scale <= 0:
        raise DegenerateFitError("all sample depths are <= 0")
    x = depths / scale
    design = np.column_stack([x**3, x**2, x, np.ones_like(x)])
    coeffs, *_ = np.linalg.lstsq(design, forces, rcond=None)

    residuals = forces - design @ coeffs
    ss_res = float(residuals @ residuals)
    ss_tot = float(np.sum((forces - forces.mean()) ** 2))
    if ss_tot < _VARIANCE_TINY:
        r_squared = 1.0 if ss_res < _VARIANCE_TINY else 0.0
    else:
        r_squared = 1.0 - ss_res / ss_tot

    return PolyCurve(
        p1=float(coeffs[0] / scale**3),
        p2=float(coeffs[1] / scale**2),
        p3=float(coeffs[2] / scale),
        p4=float(coeffs[3]),
        r_squared=r_squared,
        d_min=0.0,
        d_max=float(depths.max()),
        depth_scale=scale,
    )


def eval_force(curve: PolyCurve, depth_mm: float) -> tuple[float, bool]:
    """Force (N, floored at 0) for a depth; flags clamping to the fit range."""
    clamped = depth_mm < curve.d_min or depth_mm > curve.d_max
    d = min(max(depth_mm, curve.d_min), curve.d_max)
    force = curve.p1 * d**3 + curve.p2 * d**2 + curve.p3 * d + curve.p4
    return max(force, 0.0), clamped


# ---------------------------------------------------------------------------
# Calibration press sequence


def run_calibration(
    cfg: GelConfig,
    lighting: LightingModel,
    shape: IndenterShape | None = None,
    steps: int = 25,
    step_depth: float = 0.04,
    material: HertzParams = HertzParams(),
    depth_estimator=None,
    center: tuple[float, float] | None = None,
) -> list[CalibSample]:
    """Press a probe in ``steps`` increasing increments and collect samples.

    The default probe is a curved-face cylinder (5 mm body, 9 mm cap).  For
    each press the ground-truth force comes from the Hertz law on the actual
    depth map; the depth estimate comes from ``depth_estimator(frame)`` --
    typically :meth:`ForcePipeline.estimate_depth` -- or, when None, from
    the true depth map itself (oracle mode, no vision in the loop).
    """
    if steps < 1:
        raise GeometryError("steps must be >= 1")
    if step_depth <= 0:
        raise GeometryError("step_depth must be positive")
    if steps * step_depth > cfg.max_indent:
        raise GeometryError(
            f"deepest press {steps * step_depth} mm exceeds max_indent {cfg.max_indent} mm"
        )
    shape = shape if shape is not None else CylinderCurved(radius=5.0, cap_radius=9.0)
    center = center if center is not None else cfg.center

    samples: list[CalibSample] = []
    for k in range(1, steps + 1):
        press = k * step_depth
        dm = indent_depth(cfg, Indenter(shape, center, press))
        force = truth_force(dm, material)
        if depth_estimator is None:
            depth_est = float(dm.values.max())
        else:
            frame = render(normals_from_depth(dm), lighting, frame_id=k)
            depth_est = float(depth_estimator(frame))
        samples.append(CalibSample(depth_mm=depth_est, force_n=force))
    return samples


# ---------------------------------------------------------------------------
# Sample CSV IO


def save_samples_csv(path: str | Path, samples: list[CalibSample]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["depth_mm", "force_n"])
        for s in samples:
            # repr of a builtin float is the shortest exact decimal
            writer.writerow([repr(float(s.depth_mm)), repr(float(s.force_n))])


def load_samples_csv(path: str | Path) -> list[CalibSample]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["depth_mm", "force_n"]:
            raise DegenerateFitError(
                f"{path}: expected header 'depth_mm,force_n', got {header}"
            )
        return [CalibSample(float(d), float(f)) for d, f in reader]
