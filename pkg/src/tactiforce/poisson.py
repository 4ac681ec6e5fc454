"""Depth reconstruction from surface normals via a fast Poisson solve.

The chain is: normal map -> slope field ``G = (nx/nz, ny/nz)`` (equal to
``-grad z`` for a depth surface z) -> right-hand side ``f = div G = -lap z``
-> solve the Dirichlet problem ``lap u = f`` on the pixel grid -> depth
``z = max(0, -u)``.

The solve diagonalises the five-point Laplacian with the type-I discrete
sine transform (DST-I): for an M x N interior with spacing ``h`` the
eigenvalues are ``lam_i + mu_j`` with
``lam_i = (2 cos(pi i / (M + 1)) - 2) / h**2``, so one forward 2-D DST, a
pointwise divide and one inverse DST solve the system exactly (up to
roundoff) in O(MN log MN).

Two transform routes are provided and cross-checked in tests:

* an FFT-backed DST-I (`scipy.fft`), the fast path;
* a direct O(N^2) sine-matrix transform, used for small grids and as an
  independent oracle.

:func:`solve_poisson` returns the raw signed solution ``u`` including its
zero boundary ring; interpretation (negation, clipping) belongs to
:func:`depth_from_normals` so the solver itself stays a plain linear-algebra
primitive that can be validated against a dense solve.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft

from . import kernels
from .errors import DomainError
from .fields import NZ_FLOOR, DepthMap, GradientField, NormalMap

#: Largest interior dimension for which the direct O(N^2) transform is used
#: by the "auto" method; beyond it the FFT route wins.
DIRECT_MAX_DIM = 64


# ---------------------------------------------------------------------------
# DST-I transforms


def dst1_fft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Type-I DST along ``axis``: y_k = 2 sum_n x_n sin(pi (n+1)(k+1)/(N+1))."""
    return scipy.fft.dst(x, type=1, axis=axis)


def idst1_fft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Inverse of :func:`dst1_fft` (same kernel scaled by 1 / (2 (N + 1)))."""
    return scipy.fft.idst(x, type=1, axis=axis)


@lru_cache(maxsize=32)
def _sine_matrix(n: int) -> np.ndarray:
    k = np.arange(1, n + 1, dtype=np.float64)
    return 2.0 * np.sin(np.pi * np.outer(k, k) / (n + 1))


def dst1_direct(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Type-I DST via explicit sine-matrix multiplication (O(N^2))."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[axis]
    return np.moveaxis(_sine_matrix(n) @ np.moveaxis(x, axis, 0), 0, axis)


def idst1_direct(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Inverse direct transform; DST-I is an involution up to 2 (N + 1)."""
    n = np.asarray(x).shape[axis]
    return dst1_direct(x, axis=axis) / (2.0 * (n + 1))


# ---------------------------------------------------------------------------
# Poisson solve


@lru_cache(maxsize=32)
def _eigen_denominator(m: int, n: int, h: float) -> np.ndarray:
    i = np.arange(1, m + 1, dtype=np.float64)
    j = np.arange(1, n + 1, dtype=np.float64)
    lam = (2.0 * np.cos(np.pi * i / (m + 1)) - 2.0) / (h * h)
    mu = (2.0 * np.cos(np.pi * j / (n + 1)) - 2.0) / (h * h)
    return lam[:, np.newaxis] + mu[np.newaxis, :]


def solve_poisson(f: np.ndarray, h: float, method: str = "auto") -> np.ndarray:
    """Solve ``lap u = f`` with homogeneous Dirichlet boundary.

    ``f`` is the full (H, W) right-hand side; only its interior
    (H-2) x (W-2) block enters the solve.  Returns the full-grid solution
    ``u`` with a zero boundary ring.  ``method`` is ``"fft"``, ``"direct"``
    or ``"auto"`` (direct for interiors up to 64 on a side).
    """
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2:
        raise DomainError(f"rhs must be 2-D, got shape {f.shape}")
    height, width = f.shape
    if height < 3 or width < 3:
        raise DomainError(f"grid must be at least 3x3 to have an interior, got {height}x{width}")
    if h <= 0:
        raise DomainError("grid spacing h must be positive")
    m, n = height - 2, width - 2

    if method == "auto":
        method = "direct" if max(m, n) <= DIRECT_MAX_DIM else "fft"
    if method == "fft":
        fwd, inv = dst1_fft, idst1_fft
    elif method == "direct":
        fwd, inv = dst1_direct, idst1_direct
    else:
        raise DomainError(f"unknown solve method {method!r}")

    fhat = fwd(fwd(f[1:-1, 1:-1], axis=0), axis=1)
    fhat /= _eigen_denominator(m, n, h)
    u = np.zeros((height, width), dtype=np.float64)
    u[1:-1, 1:-1] = inv(inv(fhat, axis=0), axis=1)
    return u


# ---------------------------------------------------------------------------
# Normal-map integration pipeline


def gradients_from_normals(
    normals: NormalMap, pixel_pitch: float, nz_floor: float = NZ_FLOOR
) -> GradientField:
    """Slope field G = (nx/nz, ny/nz) with nz floored at ``nz_floor``.

    For normals of a depth surface, G equals ``-grad z``; the floor bounds
    recovered slopes at 1/nz_floor so noisy rim pixels cannot explode the
    reconstruction.
    """
    if pixel_pitch <= 0:
        raise DomainError("pixel_pitch must be positive")
    gx, gy = kernels.normal_slopes(normals.vectors, nz_floor)
    return GradientField(gx=gx, gy=gy, pixel_pitch=pixel_pitch)


def divergence(field: GradientField) -> np.ndarray:
    """div G with numpy.gradient differencing (central interior, one-sided edges)."""
    return kernels.divergence(field.gx, field.gy, field.pixel_pitch)


def depth_from_normals(
    normals: NormalMap,
    pixel_pitch: float,
    nz_floor: float = NZ_FLOOR,
    method: str = "auto",
) -> DepthMap:
    """Integrate a normal map into a non-negative depth map (mm)."""
    g = gradients_from_normals(normals, pixel_pitch, nz_floor)
    f = divergence(g)
    u = solve_poisson(f, pixel_pitch, method=method)
    depth = np.maximum(-u, 0.0)
    return DepthMap(depth, pixel_pitch)


def max_depth(depth: DepthMap, median_filter: bool = True) -> float:
    """Peak indentation in mm, robust to single-pixel outliers.

    A 3x3 median filter (reflected borders) is applied before taking the
    maximum unless ``median_filter`` is False.
    """
    values = kernels.median3x3(depth.values) if median_filter else depth.values
    return float(values.max())
