# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-pixel kernels.

Drop-in twin of :mod:`tactiforce.kernels.reference`: same function names,
same argument conventions, same finite-difference semantics
(:func:`numpy.gradient`: central interior, one-sided borders; median filter
borders reflect).  Every routine here is a straight loop over pixels --
exactly the shape of work where the NumPy versions pay multiple full-array
passes and temporaries.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

NAME = "compiled"


cdef inline Py_ssize_t _reflect(Py_ssize_t i, Py_ssize_t n) nogil:
    if i < 0:
        return -i - 1
    if i >= n:
        return 2 * n - i - 1
    return i


def median3x3(values):
    """3x3 median filter with reflected borders."""
    cdef double[:, ::1] src = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    out = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] dst = out
    cdef double window[9]
    cdef double key
    cdef Py_ssize_t i, j, di, dj, k, m
    with nogil:
        for i in range(h):
            for j in range(w):
                k = 0
                for di in range(-1, 2):
                    for dj in range(-1, 2):
                        window[k] = src[_reflect(i + di, h), _reflect(j + dj, w)]
                        k += 1
                # insertion sort of 9 values; element 4 is the median
                for k in range(1, 9):
                    key = window[k]
                    m = k - 1
                    while m >= 0 and window[m] > key:
                        window[m + 1] = window[m]
                        m -= 1
                    window[m + 1] = key
                dst[i, j] = window[4]
    return out


def shade(normals, light_dirs, gains, ambient):
    """Lambertian shading; see the reference backend for the contract."""
    cdef double[:, :, ::1] n = np.ascontiguousarray(normals, dtype=np.float64)
    cdef double[:, ::1] dirs = np.ascontiguousarray(light_dirs, dtype=np.float64)
    cdef double[:, ::1] g = np.ascontiguousarray(gains, dtype=np.float64)
    cdef double[::1] amb = np.ascontiguousarray(ambient, dtype=np.float64)
    cdef Py_ssize_t h = n.shape[0], w = n.shape[1], nl = dirs.shape[0]
    if g.shape[0] != nl or amb.shape[0] != 3 or n.shape[2] != 3 or dirs.shape[1] != 3:
        raise ValueError("shade: inconsistent light rig shapes")
    out = np.empty((h, w, 3), dtype=np.float32)
    cdef float[:, :, ::1] dst = out
    cdef Py_ssize_t i, j, l, c
    cdef double lam, acc0, acc1, acc2
    with nogil:
        for i in range(h):
            for j in range(w):
                acc0 = amb[0]
                acc1 = amb[1]
                acc2 = amb[2]
                for l in range(nl):
                    lam = -(n[i, j, 0] * dirs[l, 0] + n[i, j, 1] * dirs[l, 1]
                            + n[i, j, 2] * dirs[l, 2])
                    if lam > 0.0:
                        acc0 += lam * g[l, 0]
                        acc1 += lam * g[l, 1]
                        acc2 += lam * g[l, 2]
                if acc0 < 0.0: acc0 = 0.0
                if acc0 > 1.0: acc0 = 1.0
                if acc1 < 0.0: acc1 = 0.0
                if acc1 > 1.0: acc1 = 1.0
                if acc2 < 0.0: acc2 = 0.0
                if acc2 > 1.0: acc2 = 1.0
                dst[i, j, 0] = <float> acc0
                dst[i, j, 1] = <float> acc1
                dst[i, j, 2] = <float> acc2
    return out


cdef inline double _diff_x(double[:, ::1] z, Py_ssize_t i, Py_ssize_t j,
                           Py_ssize_t w, double h) nogil:
    if j == 0:
        return (z[i, 1] - z[i, 0]) / h
    if j == w - 1:
        return (z[i, w - 1] - z[i, w - 2]) / h
    return (z[i, j + 1] - z[i, j - 1]) / (2.0 * h)


cdef inline double _diff_y(double[:, ::1] z, Py_ssize_t i, Py_ssize_t j,
                           Py_ssize_t rows, double h) nogil:
    if i == 0:
        return (z[1, j] - z[0, j]) / h
    if i == rows - 1:
        return (z[rows - 1, j] - z[rows - 2, j]) / h
    return (z[i + 1, j] - z[i - 1, j]) / (2.0 * h)


def normals_from_depth(values, double h):
    """Unit normals of the depth surface: n ~ (-dz/dx, -dz/dy, 1)."""
    cdef double[:, ::1] z = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t rows = z.shape[0], cols = z.shape[1]
    out = np.empty((rows, cols, 3), dtype=np.float64)
    cdef double[:, :, ::1] n = out
    cdef Py_ssize_t i, j
    cdef double nx, ny, inv
    with nogil:
        for i in range(rows):
            for j in range(cols):
                nx = -_diff_x(z, i, j, cols, h)
                ny = -_diff_y(z, i, j, rows, h)
                inv = 1.0 / sqrt(nx * nx + ny * ny + 1.0)
                n[i, j, 0] = nx * inv
                n[i, j, 1] = ny * inv
                n[i, j, 2] = inv
    return out


def normal_slopes(vectors, double nz_floor):
    """(nx/nz, ny/nz) with nz floored; returns two float64 arrays."""
    cdef double[:, :, ::1] v = np.ascontiguousarray(vectors, dtype=np.float64)
    cdef Py_ssize_t rows = v.shape[0], cols = v.shape[1]
    gx_arr = np.empty((rows, cols), dtype=np.float64)
    gy_arr = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[:, ::1] gy = gy_arr
    cdef Py_ssize_t i, j
    cdef double nz
    with nogil:
        for i in range(rows):
            for j in range(cols):
                nz = v[i, j, 2]
                if nz < nz_floor:
                    nz = nz_floor
                gx[i, j] = v[i, j, 0] / nz
                gy[i, j] = v[i, j, 1] / nz
    return gx_arr, gy_arr


def divergence(gx, gy, double h):
    """d(gx)/dx + d(gy)/dy, numpy.gradient differencing."""
    cdef double[:, ::1] ax = np.ascontiguousarray(gx, dtype=np.float64)
    cdef double[:, ::1] ay = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t rows = ax.shape[0], cols = ax.shape[1]
    if ay.shape[0] != rows or ay.shape[1] != cols:
        raise ValueError("divergence: gx/gy shape mismatch")
    out = np.empty((rows, cols), dtype=np.float64)
    cdef double[:, ::1] f = out
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(rows):
            for j in range(cols):
                f[i, j] = _diff_x(ax, i, j, cols, h) + _diff_y(ay, i, j, rows, h)
    return out


def normalize_rows_floor(y, double nz_floor):
    """Floor column 2, renormalise rows of an (N, 3) array to unit length."""
    arr = np.array(y, copy=True)
    if arr.dtype == np.float32:
        _normalize_f32(arr, nz_floor)
    elif arr.dtype == np.float64:
        _normalize_f64(arr, nz_floor)
    else:
        raise TypeError(f"unsupported dtype {arr.dtype}")
    return arr


cdef void _normalize_f32(float[:, ::1] v, double nz_floor) noexcept:
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t i
    cdef float floor_f = <float> nz_floor
    cdef float nx, ny, nz, inv
    with nogil:
        for i in range(n):
            nx = v[i, 0]
            ny = v[i, 1]
            nz = v[i, 2]
            if nz < floor_f:
                nz = floor_f
            inv = <float> (1.0 / sqrt(<double> (nx * nx + ny * ny + nz * nz)))
            v[i, 0] = nx * inv
            v[i, 1] = ny * inv
            v[i, 2] = nz * inv


cdef void _normalize_f64(double[:, ::1] v, double nz_floor) noexcept:
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t i
    cdef double nx, ny, nz, inv
    with nogil:
        for i in range(n):
            nx = v[i, 0]
            ny = v[i, 1]
            nz = v[i, 2]
            if nz < nz_floor:
                nz = nz_floor
            inv = 1.0 / sqrt(nx * nx + ny * ny + nz * nz)
            v[i, 0] = nx * inv
            v[i, 1] = ny * inv
            v[i, 2] = nz * inv
