"""Synthetic elastomer-gel tactile sensor.

Forward model of a DIGIT-style sensor: a rigid indenter pressed into a soft
gel pad produces an indentation :class:`~tactiforce.fields.DepthMap`; the
deformed surface has per-pixel normals; three coloured directional lights
shade those normals into an RGB :class:`~tactiforce.fields.TactileFrame`.

Geometry conventions
--------------------
The gel surface is the z = 0 plane imaged from +z.  ``depth`` is how far the
surface is pressed *in* (mm, >= 0).  Indenters are axisymmetric about a
vertical axis through ``center`` (mm, in plane coordinates where x spans the
image width and y the height); each shape provides a radial *profile*
``p(r)`` = height of the indenter surface above its lowest point, so a press
of depth ``d`` indents ``max(0, d - p(r))``.

Ground-truth contact force follows a Hertzian power law
``F = k * depth_max ** 1.5``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage

from . import kernels
from .errors import GeometryError
from .fields import DepthMap, NormalMap, TactileFrame

#: Pixels of guaranteed zero-depth margin between any contact and the image
#: border.  Keeps the Dirichlet boundary of the depth integrator honest.
BORDER_MARGIN_PX = 2


# ---------------------------------------------------------------------------
# Gel and material parameters


@dataclass(frozen=True)
class GelConfig:
    """Geometry and optics of the simulated gel pad."""

    width_px: int = 320
    height_px: int = 240
    pixel_pitch: float = 0.05  # mm per pixel
    max_indent: float = 1.25  # mm, elastomer depth budget
    smoothing_sigma: float = 2.0  # px, gel elasticity blur (0 disables)

    def __post_init__(self) -> None:
        if self.width_px < 8 or self.height_px < 8:
            raise GeometryError(f"gel must be at least 8x8 px, got {self.height_px}x{self.width_px}")
        if self.pixel_pitch <= 0:
            raise GeometryError("pixel_pitch must be positive")
        if self.max_indent <= 0:
            raise GeometryError("max_indent must be positive")
        if self.smoothing_sigma < 0:
            raise GeometryError("smoothing_sigma must be non-negative")

    @property
    def width_mm(self) -> float:
        return (self.width_px - 1) * self.pixel_pitch

    @property
    def height_mm(self) -> float:
        return (self.height_px - 1) * self.pixel_pitch

    @property
    def center(self) -> tuple[float, float]:
        return (self.width_mm / 2.0, self.height_mm / 2.0)


@dataclass(frozen=True)
class HertzParams:
    """Hertzian contact law F = k * d_max^1.5 (force N, depth mm)."""

    k: float = 8.0  # N / mm^1.5

    def force(self, depth_mm: float) -> float:
        if depth_mm <= 0:
            return 0.0
        return self.k * depth_mm**1.5


# ---------------------------------------------------------------------------
# Indenter shapes


@dataclass(frozen=True)
class Sphere:
    """A rigid ball of the given radius (mm)."""

    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise GeometryError("sphere radius must be positive")

    def max_depth(self) -> float:
        return self.radius

    def profile(self, r: np.ndarray) -> np.ndarray:
        rr = np.minimum(r, self.radius)
        p = self.radius - np.sqrt(self.radius**2 - rr**2)
        return np.where(r <= self.radius, p, np.inf)

    def contact_radius(self, depth: float) -> float:
        d = min(depth, self.radius)
        return math.sqrt(max(0.0, d * (2.0 * self.radius - d)))


@dataclass(frozen=True)
class CylinderFlat:
    """A flat-bottomed cylindrical punch of the given radius (mm)."""

    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise GeometryError("cylinder radius must be positive")

    def max_depth(self) -> float:
        return math.inf

    def profile(self, r: np.ndarray) -> np.ndarray:
        return np.where(r <= self.radius, 0.0, np.inf)

    def contact_radius(self, depth: float) -> float:
        return self.radius if depth > 0 else 0.0


@dataclass(frozen=True)
class CylinderCurved:
    """A cylinder whose pressing face is a spherical cap.

    ``radius`` bounds the cylinder body; ``cap_radius`` is the curvature
    radius of the face and must be >= ``radius`` so the cap spans the body.
    """

    radius: float
    cap_radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise GeometryError("cylinder radius must be positive")
        if self.cap_radius < self.radius:
            raise GeometryError(
                f"cap_radius ({self.cap_radius}) must be >= radius ({self.radius})"
            )

    def max_depth(self) -> float:
        return self.cap_radius

    def profile(self, r: np.ndarray) -> np.ndarray:
        rr = np.minimum(r, self.radius)
        p = self.cap_radius - np.sqrt(self.cap_radius**2 - rr**2)
        return np.where(r <= self.radius, p, np.inf)

    def contact_radius(self, depth: float) -> float:
        d = min(depth, self.cap_radius)
        r = math.sqrt(max(0.0, d * (2.0 * self.cap_radius - d)))
        return min(r, self.radius)


IndenterShape = Sphere | CylinderFlat | CylinderCurved


@dataclass(frozen=True)
class Indenter:
    """A shape pressed at ``center`` (mm) to ``press_depth`` (mm)."""

    shape: IndenterShape
    center: tuple[float, float]
    press_depth: float


# ---------------------------------------------------------------------------
# Lighting


@dataclass(frozen=True)
class Light:
    """One directional light: unit propagation direction and RGB gain."""

    direction: tuple[float, float, float]
    gain: tuple[float, float, float]

    def __post_init__(self) -> None:
        norm = math.sqrt(sum(c * c for c in self.direction))
        if abs(norm - 1.0) > 1e-9:
            raise GeometryError(f"light direction must be unit length, |d| = {norm}")
        if self.direction[2] >= 0:
            raise GeometryError("light must shine downward (direction z < 0)")


@dataclass(frozen=True)
class LightingModel:
    """Three directional lights plus an ambient term.

    Rendered intensity per channel:
    ``c = clip(ambient_c + sum_l gain_lc * max(0, n . -d_l), 0, 1)``.
    """

    lights: tuple[Light, Light, Light]
    ambient: tuple[float, float, float] = (0.25, 0.25, 0.25)

    def __post_init__(self) -> None:
        if len(self.lights) != 3:
            raise GeometryError(f"exactly 3 lights required, got {len(self.lights)}")
        for c in range(3):
            total = self.ambient[c] + sum(l.gain[c] for l in self.lights)
            if total > 1.0 + 1e-9:
                raise GeometryError(
                    f"channel {c} can saturate: ambient + gains = {total:.3f} > 1"
                )

    def direction_matrix(self) -> np.ndarray:
        return np.array([l.direction for l in self.lights], dtype=np.float64)

    def gain_matrix(self) -> np.ndarray:
        return np.array([l.gain for l in self.lights], dtype=np.float64)


def default_lighting(
    azimuths_deg: tuple[float, float, float] = (0.0, 120.0, 240.0),
    elevation_deg: float = 45.0,
    gain: float = 0.6,
    ambient: float = 0.25,
) -> LightingModel:
    """Standard three-light RGB rig: one primary per channel, 120 deg apart.

    A light at azimuth ``a`` and elevation ``e`` propagates along
    ``(-cos a * cos e, -sin a * cos e, -sin e)`` -- towards the origin and
    downwards onto the gel.
    """
    lights = []
    for i, az_deg in enumerate(azimuths_deg):
        az = math.radians(az_deg)
        el = math.radians(elevation_deg)
        direction = (
            -math.cos(az) * math.cos(el),
            -math.sin(az) * math.cos(el),
            -math.sin(el),
        )
        g = [0.0, 0.0, 0.0]
        g[i] = gain
        lights.append(Light(direction=direction, gain=tuple(g)))
    return LightingModel(lights=tuple(lights), ambient=(ambient, ambient, ambient))


# ---------------------------------------------------------------------------
# Forward model


def _grid_radii(cfg: GelConfig, center: tuple[float, float]) -> np.ndarray:
    xs = np.arange(cfg.width_px, dtype=np.float64) * cfg.pixel_pitch - center[0]
    ys = np.arange(cfg.height_px, dtype=np.float64) * cfg.pixel_pitch - center[1]
    return np.hypot(xs[np.newaxis, :], ys[:, np.newaxis])


def indent_depth(cfg: GelConfig, indenter: Indenter) -> DepthMap:
    """Depth map produced by pressing ``indenter`` into the gel.

    Raises :class:`GeometryError` when the press exceeds ``max_indent`` or
    the contact footprint (plus a 2-pixel margin) leaves the gel plane.
    """
    d = indenter.press_depth
    if d < 0:
        raise GeometryError(f"press_depth must be >= 0, got {d}")
    if d > cfg.max_indent:
        raise GeometryError(f"press_depth {d} mm exceeds max_indent {cfg.max_indent} mm")
    if d > indenter.shape.max_depth():
        raise GeometryError(
            f"press_depth {d} mm exceeds the indenter's own height budget"
        )

    margin = BORDER_MARGIN_PX * cfg.pixel_pitch
    r_c = indenter.shape.contact_radius(d)
    cx, cy = indenter.center
    if (
        cx - r_c < margin
        or cy - r_c < margin
        or cx + r_c > cfg.width_mm - margin
        or cy + r_c > cfg.height_mm - margin
    ):
        raise GeometryError(
            f"contact footprint (center ({cx:.2f}, {cy:.2f}) mm, radius {r_c:.2f} mm) "
            f"leaves the gel plane or its {BORDER_MARGIN_PX}-px margin"
        )

    if d == 0:
        return DepthMap.zeros(cfg.height_px, cfg.width_px, cfg.pixel_pitch)

    r = _grid_radii(cfg, indenter.center)
    with np.errstate(invalid="ignore"):
        pen = d - indenter.shape.profile(r)
    depth = np.where(np.isfinite(pen), np.maximum(pen, 0.0), 0.0)

    if cfg.smoothing_sigma > 0:
        depth = scipy.ndimage.gaussian_filter(depth, sigma=cfg.smoothing_sigma, mode="constant")
        np.maximum(depth, 0.0, out=depth)
    m = BORDER_MARGIN_PX
    depth[:m, :] = 0.0
    depth[-m:, :] = 0.0
    depth[:, :m] = 0.0
    depth[:, -m:] = 0.0
    return DepthMap(depth, cfg.pixel_pitch)


def normals_from_depth(depth: DepthMap) -> NormalMap:
    """Unit surface normals of the indented gel, n ~ (-dz/dx, -dz/dy, 1)."""
    return NormalMap(kernels.normals_from_depth(depth.values, depth.pixel_pitch))


def render(
    normals: NormalMap,
    lighting: LightingModel,
    stamp: float = 0.0,
    frame_id: int = 0,
) -> TactileFrame:
    """Shade a normal map into an RGB tactile frame (float32, [0, 1])."""
    pixels = kernels.shade(
        normals.vectors,
        lighting.direction_matrix(),
        lighting.gain_matrix(),
        np.asarray(lighting.ambient, dtype=np.float64),
    )
    return TactileFrame(pixels, stamp=stamp, frame_id=frame_id)


def truth_force(depth: DepthMap, material: HertzParams = HertzParams()) -> float:
    """Ground-truth normal force for a depth map under the Hertz law."""
    return material.force(float(depth.values.max()))


def sphere_normals_analytic(
    cfg: GelConfig, center: tuple[float, float], radius: float, press_depth: float
) -> np.ndarray:
    """Exact normals of an unsmoothed sphere press; training label field.

    Inside the contact disc the gel wraps the ball, so the normal is the
    sphere's own outward normal ``((x-cx)/R, (y-cy)/R, sqrt(R^2-r^2)/R)``;
    outside it the gel is flat, ``(0, 0, 1)``.  The spherical shape exposes
    normals in every direction, which is what makes it a good calibration
    target.
    """
    if press_depth < 0 or press_depth > radius:
        raise GeometryError(f"press_depth must lie in [0, radius], got {press_depth}")
    r = _grid_radii(cfg, center)
    r_c = math.sqrt(press_depth * (2.0 * radius - press_depth))
    inside = r < r_c
    xs = np.arange(cfg.width_px, dtype=np.float64) * cfg.pixel_pitch - center[0]
    ys = np.arange(cfg.height_px, dtype=np.float64) * cfg.pixel_pitch - center[1]
    n = np.zeros((cfg.height_px, cfg.width_px, 3), dtype=np.float64)
    n[:, :, 2] = 1.0
    rr = np.minimum(r, radius)
    nz = np.sqrt(radius**2 - rr**2) / radius
    n[:, :, 0] = np.where(inside, xs[np.newaxis, :] / radius, 0.0)
    n[:, :, 1] = np.where(inside, ys[:, np.newaxis] / radius, 0.0)
    n[:, :, 2] = np.where(inside, nz, 1.0)
    return n
