"""NumPy reference implementations of the per-pixel hot kernels.

These are the semantic ground truth: the compiled backend in
``tactiforce._fastkern`` must match them within floating-point tolerance
(see tests).  They are also the fallback used when the extension is not
built.

Conventions shared by both backends:

* arrays are row-major, row index = y, column index = x;
* ``h`` is the grid spacing (pixel pitch, mm);
* finite differences follow :func:`numpy.gradient`: central differences in
  the interior, one-sided at the borders.
"""

from __future__ import annotations

import numpy as np
import scipy.ndimage

NAME = "numpy"


def median3x3(values: np.ndarray) -> np.ndarray:
    """3x3 median filter with reflected borders."""
    return scipy.ndimage.median_filter(values, size=3, mode="reflect")


def shade(
    normals: np.ndarray,
    light_dirs: np.ndarray,
    gains: np.ndarray,
    ambient: np.ndarray,
) -> np.ndarray:
    """Lambertian shading of a normal map under a set of point lights.

    ``light_dirs`` is (L, 3) unit propagation directions (pointing from the
    light into the scene), ``gains`` is (L, 3) per-channel intensities,
    ``ambient`` is (3,).  Returns a float32 (H, W, 3) image clipped to
    [0, 1]: ``c = clip(ambient_c + sum_l gain_lc * max(0, n . -d_l))``.
    """
    n = np.asarray(normals, dtype=np.float64)
    out = np.empty(n.shape, dtype=np.float64)
    out[:] = np.asarray(ambient, dtype=np.float64)
    for d, g in zip(light_dirs, gains):
        lam = np.maximum(0.0, n @ (-np.asarray(d, dtype=np.float64)))
        out += lam[:, :, np.newaxis] * np.asarray(g, dtype=np.float64)
    np.clip(out, 0.0, 1.0, out=out)
    return out.astype(np.float32)


def normals_from_depth(values: np.ndarray, h: float) -> np.ndarray:
    """Unit normals of the depth surface z(x, y): n ~ (-dz/dx, -dz/dy, 1)."""
    z = np.asarray(values, dtype=np.float64)
    dz_dy, dz_dx = np.gradient(z, h)
    n = np.empty(z.shape + (3,), dtype=np.float64)
    n[:, :, 0] = -dz_dx
    n[:, :, 1] = -dz_dy
    n[:, :, 2] = 1.0
    n /= np.sqrt(n[:, :, 0] ** 2 + n[:, :, 1] ** 2 + 1.0)[:, :, np.newaxis]
    return n


def normal_slopes(vectors: np.ndarray, nz_floor: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel slope components (nx/nz, ny/nz) with nz floored.

    For a depth surface these equal (-dz/dx, -dz/dy); the floor bounds the
    recovered slope magnitude at 1/nz_floor.
    """
    v = np.asarray(vectors, dtype=np.float64)
    nz = np.maximum(v[:, :, 2], nz_floor)
    return v[:, :, 0] / nz, v[:, :, 1] / nz


def divergence(gx: np.ndarray, gy: np.ndarray, h: float) -> np.ndarray:
    """Divergence d(gx)/dx + d(gy)/dy with numpy.gradient differencing."""
    ddx = np.gradient(np.asarray(gx, dtype=np.float64), h, axis=1)
    ddy = np.gradient(np.asarray(gy, dtype=np.float64), h, axis=0)
    return ddx + ddy

def normalize_rows_floor(y: np.ndarray, nz_floor: float) -> np.ndarray:
    """Floor column 2 at nz_floor, then scale each row of (N, 3) to unit length.

    Operates in the array's own dtype and returns a new array.
    """
    out = np.array(y, copy=True)
    np.maximum(out[:, 2], out.dtype.type(nz_floor), out=out[:, 2])
    norm = np.sqrt(out[:, 0] ** 2 + out[:, 1] ** 2 + out[:, 2] ** 2)
    out /= norm[:, np.newaxis]
    return out
