"""Core field containers and the ``TFR1`` binary interchange format.

All dense per-pixel quantities flowing through the pipeline live in one of
four containers:

* :class:`DepthMap` -- gel surface indentation in millimetres, z >= 0 means
  pressed in.
* :class:`NormalMap` -- unit surface normals, z component positive (the
  unloaded gel faces +z).
* :class:`GradientField` -- per-pixel surface slope (gx, gy) used by the
  depth integrator.
* :class:`TactileFrame` -- rendered/captured RGB image, channels in [0, 1].

Arrays are row-major with row index = y (top to bottom) and column index = x
(left to right); ``pixel_pitch`` converts pixel spacing to millimetres.

The ``TFR1`` container serialises any of these planes losslessly:

``"TFR1"`` magic, then three little-endian uint32 fields ``width``,
``height``, ``channels``, then ``height * width * channels`` little-endian
float32 samples in row-major order.  PNG export is provided for eyeballing
only -- it quantises to 8 bits and must never feed numeric checks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, FieldFormatError

TFR1_MAGIC = b"TFR1"
_HEADER = struct.Struct("<III")  # width, height, channels

#: Minimum admissible surface-normal z component.  Gradients nx/nz, ny/nz
#: are evaluated after flooring nz here, bounding slopes at 1/0.05 = 20.
NZ_FLOOR = 0.05


def _require(cond: bool, msg: str) -> None:
    """Wire-format precondition: violation means malformed TFR1 bytes."""
    if not cond:
        raise FieldFormatError(msg)


def _check(cond: bool, msg: str) -> None:
    """Value-domain precondition: violation means physically invalid data."""
    if not cond:
        raise DomainError(msg)


# ---------------------------------------------------------------------------
# TFR1 container


def write_tfr(path: str | Path, values: np.ndarray) -> None:
    """Serialise a (H, W) or (H, W, C) float array to a TFR1 file."""
    arr = np.asarray(values)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    _require(arr.ndim == 3, f"expected 2-D or 3-D array, got shape {arr.shape}")
    h, w, c = arr.shape
    _require(h > 0 and w > 0 and c > 0, f"empty array of shape {arr.shape}")
    data = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(TFR1_MAGIC)
        fh.write(_HEADER.pack(w, h, c))
        fh.write(data.tobytes())


def read_tfr(path: str | Path) -> np.ndarray:
    """Read a TFR1 file back into a float32 array of shape (H, W, C).

    Single-channel files are returned as (H, W).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    return decode_tfr(blob)


def encode_tfr(values: np.ndarray) -> bytes:
    """Return the TFR1 byte serialisation of a (H, W[, C]) float array."""
    arr = np.asarray(values)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    _require(arr.ndim == 3, f"expected 2-D or 3-D array, got shape {arr.shape}")
    h, w, c = arr.shape
    _require(h > 0 and w > 0 and c > 0, f"empty array of shape {arr.shape}")
    data = np.ascontiguousarray(arr, dtype="<f4")
    return TFR1_MAGIC + _HEADER.pack(w, h, c) + data.tobytes()


def decode_tfr(blob: bytes) -> np.ndarray:
    """Decode TFR1 bytes into (H, W) or (H, W, C) float32."""
    _require(len(blob) >= 4 + _HEADER.size, "truncated TFR1 header")
    _require(blob[:4] == TFR1_MAGIC, f"bad magic {blob[:4]!r}, expected {TFR1_MAGIC!r}")
    w, h, c = _HEADER.unpack_from(blob, 4)
    _require(w > 0 and h > 0 and c > 0, f"invalid dimensions {w}x{h}x{c}")
    expected = 4 + _HEADER.size + 4 * w * h * c
    _require(
        len(blob) == expected,
        f"payload size mismatch: file has {len(blob)} bytes, header implies {expected}",
    )
    flat = np.frombuffer(blob, dtype="<f4", offset=4 + _HEADER.size)
    arr = flat.reshape(h, w, c).copy()
    return arr[:, :, 0] if c == 1 else arr


def write_png(path: str | Path, pixels: np.ndarray) -> None:
    """Export an RGB frame (H, W, 3) in [0, 1] as an 8-bit PNG.

    Lossy by construction; for visual inspection only.
    """
    from PIL import Image

    arr = np.asarray(pixels, dtype=np.float64)
    _require(arr.ndim == 3 and arr.shape[2] == 3, f"expected (H, W, 3), got {arr.shape}")
    quantised = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantised, mode="RGB").save(path, format="PNG")


# ---------------------------------------------------------------------------
# Field containers


@dataclass
class DepthMap:
    """Gel indentation depth in millimetres; 0 = undeformed surface."""

    values: np.ndarray  # (H, W) float64, mm
    pixel_pitch: float  # mm per pixel

    @classmethod
    def zeros(cls, height: int, width: int, pixel_pitch: float) -> "DepthMap":
        return cls(np.zeros((height, width), dtype=np.float64), pixel_pitch)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def validate(self) -> None:
        v = self.values
        _check(v.ndim == 2, f"depth map must be 2-D, got {v.shape}")
        _check(self.pixel_pitch > 0, "pixel_pitch must be positive")
        _check(bool(np.all(np.isfinite(v))), "depth map contains non-finite values")
        _check(bool(np.all(v >= 0)), "depth map contains negative depths")
        ring = np.concatenate([v[0, :], v[-1, :], v[:, 0], v[:, -1]])
        _check(bool(np.all(ring == 0)), "depth map border ring must be zero")

    def save(self, path: str | Path) -> None:
        write_tfr(path, self.values)

    @classmethod
    def load(cls, path: str | Path, pixel_pitch: float) -> "DepthMap":
        arr = read_tfr(path)
        _require(arr.ndim == 2, f"depth TFR1 must be single-channel, got shape {arr.shape}")
        return cls(arr.astype(np.float64), pixel_pitch)


@dataclass
class NormalMap:
    """Per-pixel unit surface normals with positive z component."""

    vectors: np.ndarray  # (H, W, 3) float

    @property
    def shape(self) -> tuple[int, int]:
        return self.vectors.shape[:2]  # type: ignore[return-value]

    def validate(self, tol: float = 1e-6) -> None:
        v = self.vectors
        _check(v.ndim == 3 and v.shape[2] == 3, f"normal map must be (H, W, 3), got {v.shape}")
        _check(bool(np.all(np.isfinite(v))), "normal map contains non-finite values")
        norms = np.linalg.norm(np.asarray(v, dtype=np.float64), axis=2)
        _check(
            float(np.max(np.abs(norms - 1.0))) <= tol,
            f"normals not unit length (max |1 - |n|| = {np.max(np.abs(norms - 1.0)):.3g})",
        )
        _check(bool(np.all(v[:, :, 2] > 0)), "normal map has non-positive z components")

    def save(self, path: str | Path) -> None:
        write_tfr(path, self.vectors)

    @classmethod
    def load(cls, path: str | Path) -> "NormalMap":
        arr = read_tfr(path)
        _require(
            arr.ndim == 3 and arr.shape[2] == 3,
            f"normal TFR1 must have 3 channels, got shape {arr.shape}",
        )
        return cls(arr)


@dataclass
class GradientField:
    """Surface slope field: gx = dz/dx is recovered as -nx/nz, etc."""

    gx: np.ndarray  # (H, W) float64
    gy: np.ndarray  # (H, W) float64
    pixel_pitch: float  # mm per pixel

    def validate(self) -> None:
        _check(self.gx.ndim == 2, f"gx must be 2-D, got {self.gx.shape}")
        _check(self.gx.shape == self.gy.shape, "gx/gy shape mismatch")
        _check(self.pixel_pitch > 0, "pixel_pitch must be positive")
        _check(
            bool(np.all(np.isfinite(self.gx)) and np.all(np.isfinite(self.gy))),
            "gradient field contains non-finite values",
        )


@dataclass
class TactileFrame:
    """An RGB tactile image with acquisition metadata."""

    pixels: np.ndarray  # (H, W, 3) float32 in [0, 1]
    stamp: float = 0.0  # seconds
    frame_id: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]  # type: ignore[return-value]

    def validate(self) -> None:
        p = self.pixels
        _check(p.ndim == 3 and p.shape[2] == 3, f"frame must be (H, W, 3), got {p.shape}")
        _check(bool(np.all(np.isfinite(p))), "frame contains non-finite values")
        _check(
            bool(np.all(p >= 0.0) and np.all(p <= 1.0)),
            "frame channels must lie in [0, 1]",
        )

    def save(self, path: str | Path) -> None:
        write_tfr(path, self.pixels)

    def save_png(self, path: str | Path) -> None:
        write_png(path, self.pixels)

    @classmethod
    def load(cls, path: str | Path, stamp: float = 0.0, frame_id: int = 0) -> "TactileFrame":
        arr = read_tfr(path)
        _require(
            arr.ndim == 3 and arr.shape[2] == 3,
            f"frame TFR1 must have 3 channels, got shape {arr.shape}",
        )
        return cls(arr, stamp=stamp, frame_id=frame_id)

    def encode(self) -> bytes:
        return encode_tfr(self.pixels)

    @classmethod
    def decode(cls, blob: bytes, stamp: float = 0.0, frame_id: int = 0) -> "TactileFrame":
        arr = decode_tfr(blob)
        _require(
            arr.ndim == 3 and arr.shape[2] == 3,
            f"frame TFR1 must have 3 channels, got shape {arr.shape}",
        )
        return cls(arr, stamp=stamp, frame_id=frame_id)
