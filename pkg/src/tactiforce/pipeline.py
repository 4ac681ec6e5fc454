"""End-to-end tactile force pipeline with reusable inference buffers.

:class:`ForcePipeline` chains the trained normal network, the Poisson depth
integrator and the cubic force curve for one fixed image resolution.  It
preallocates the float32 feature matrix and layer activations once, so the
per-frame cost is pure compute -- this is the object the benchmark, the
live teleop sensor and the CLI batch reconstructor all run.

Per-stage wall times of the most recent frame are kept in ``last_timings``
(milliseconds) for the benchmark report.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from . import kernels, poisson
from .calibration import PolyCurve, eval_force
from .errors import DomainError
from .fields import NZ_FLOOR, DepthMap, NormalMap, TactileFrame
from .mlp import FEATURES, MlpParams, frame_features, params_float32

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForceRecord:
    """One force estimate produced from one tactile frame."""

    frame_id: int
    stamp: float
    force_n: float
    depth_mm: float
    clamped: bool

    def to_payload(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "stamp": self.stamp,
            "force_n": self.force_n,
            "depth_mm": self.depth_mm,
            "clamped": self.clamped,
        }


class ForcePipeline:
    """frame -> normals -> depth -> peak depth -> force, at one resolution."""

    def __init__(
        self,
        params: MlpParams,
        curve: PolyCurve | None,
        height: int,
        width: int,
        pixel_pitch: float,
        nz_floor: float = NZ_FLOOR,
        median_filter: bool = True,
        solver_method: str = "auto",
    ):
        if height < 3 or width < 3:
            raise DomainError(f"resolution {height}x{width} too small")
        if params.sizes[0] != FEATURES:
            raise DomainError(f"network expects {params.sizes[0]} inputs, pipeline provides {FEATURES}")
        self.height = height
        self.width = width
        self.pixel_pitch = pixel_pitch
        self.nz_floor = nz_floor
        self.median_filter = median_filter
        self.solver_method = solver_method
        self.curve = curve
        self._params = params_float32(params)

        n = height * width
        self._feats = np.empty((n, FEATURES), dtype=np.float32)
        # Image coordinates never change; write them once.
        frame_features(np.zeros((height, width, 3), dtype=np.float32), out=self._feats)
        self._acts = [np.empty((n, w.shape[1]), dtype=np.float32) for w in self._params.weights]
        self.last_timings: dict[str, float] = {}

    # -- stages ------------------------------------------------------------

    def predict_normals(self, frame: TactileFrame) -> NormalMap:
        pixels = frame.pixels
        if pixels.shape[:2] != (self.height, self.width):
            raise DomainError(
                f"frame is {pixels.shape[0]}x{pixels.shape[1]}, pipeline built for "
                f"{self.height}x{self.width}"
            )
        t0 = time.perf_counter()
        self._feats[:, :3] = pixels.reshape(-1, 3)
        t1 = time.perf_counter()
        x = self._feats
        last = len(self._acts) - 1
        for i, (w, b) in enumerate(zip(self._params.weights, self._params.biases)):
            np.dot(x, w, out=self._acts[i])
            self._acts[i] += b
            if i != last:
                np.maximum(self._acts[i], 0.0, out=self._acts[i])
            x = self._acts[i]
        t2 = time.perf_counter()
        vec = kernels.normalize_rows_floor(self._acts[last], self.nz_floor)
        t3 = time.perf_counter()
        self.last_timings = {
            "features_ms": (t1 - t0) * 1e3,
            "mlp_ms": (t2 - t1) * 1e3,
            "normalize_ms": (t3 - t2) * 1e3,
        }
        return NormalMap(vec.reshape(self.height, self.width, 3))

    def depth_map(self, frame: TactileFrame) -> DepthMap:
        normals = self.predict_normals(frame)
        t0 = time.perf_counter()
        dm = poisson.depth_from_normals(
            normals, self.pixel_pitch, self.nz_floor, method=self.solver_method
        )
        self.last_timings["solve_ms"] = (time.perf_counter() - t0) * 1e3
        return dm

    def estimate_depth(self, frame: TactileFrame) -> float:
        dm = self.depth_map(frame)
        t0 = time.perf_counter()
        d = poisson.max_depth(dm, median_filter=self.median_filter)
        self.last_timings["extract_ms"] = (time.perf_counter() - t0) * 1e3
        return d

    def process(self, frame: TactileFrame) -> ForceRecord:
        """Full per-frame estimate; requires a fitted force curve."""
        if self.curve is None:
            raise DomainError("pipeline has no force curve; calibrate first")
        depth = self.estimate_depth(frame)
        t0 = time.perf_counter()
        force, clamped = eval_force(self.curve, depth)
        self.last_timings["regress_ms"] = (time.perf_counter() - t0) * 1e3
        return ForceRecord(
            frame_id=frame.frame_id,
            stamp=frame.stamp,
            force_n=force,
            depth_mm=depth,
            clamped=clamped,
        )


def force_stream(
    pipeline: ForcePipeline, frames: Iterable[TactileFrame]
) -> Iterator[ForceRecord]:
    """Map frames to force records, skipping malformed frames with a warning."""
    for frame in frames:
        try:
            yield pipeline.process(frame)
        except Exception:
            fid = getattr(frame, "frame_id", "?")
            log.warning("skipping malformed frame %s", fid, exc_info=True)
