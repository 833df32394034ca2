# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Exact Euclidean distance field over a binary mask.

Two-pass separable lower-envelope squared distance transform; anisotropic
pixel spacing enters as per-axis quadratic weights.  At unit spacing every
squared distance is an exact integer in float64, so results are bit-equal
to an all-pairs scan.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, sqrt

cnp.import_array()

# large finite sentinel for "no foreground seen"; must stay finite so the
# parabola intersections below never divide infinities
cdef double BIG = 1e30


cdef void _dt_1d(double* f, double* d, Py_ssize_t* v, double* z,
                 Py_ssize_t n, double wgt) noexcept nogil:
    cdef Py_ssize_t q, k = 0
    cdef double s
    v[0] = 0
    z[0] = -INFINITY
    z[1] = INFINITY
    for q in range(1, n):
        s = ((f[q] + wgt * q * q) - (f[v[k]] + wgt * v[k] * v[k])) \
            / (2.0 * wgt * (q - v[k]))
        while s <= z[k]:
            k -= 1
            s = ((f[q] + wgt * q * q) - (f[v[k]] + wgt * v[k] * v[k])) \
                / (2.0 * wgt * (q - v[k]))
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = INFINITY
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = wgt * (q - v[k]) * (q - v[k]) + f[v[k]]


def distance_field(mask, spacing=(1.0, 1.0)):
    """Per-pixel Euclidean distance to the nearest foreground pixel of ``mask``.

    Pixels are treated as points on an anisotropic grid with the given
    (row, column) spacing.  Returns float64 [H, W]; cells of an all-empty
    mask come back huge (~1e15), callers must handle that case themselves.
    """
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got {arr.ndim} axes")
    arr = np.ascontiguousarray(arr.astype(bool).view(np.uint8))
    cdef cnp.uint8_t[:, ::1] m = arr
    cdef Py_ssize_t h = arr.shape[0], w = arr.shape[1]
    cdef double sy = float(spacing[0]), sx = float(spacing[1])

    out = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] dist = out
    cdef Py_ssize_t n = h if h > w else w
    f_buf = np.empty(n, dtype=np.float64)
    d_buf = np.empty(n, dtype=np.float64)
    v_buf = np.empty(n, dtype=np.intp)
    z_buf = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] f = f_buf
    cdef double[::1] d = d_buf
    cdef Py_ssize_t[::1] v = v_buf
    cdef double[::1] z = z_buf

    cdef Py_ssize_t x, y
    cdef double wy = sy * sy, wx = sx * sx
    with nogil:
        for x in range(w):
            for y in range(h):
                f[y] = 0.0 if m[y, x] else BIG
            _dt_1d(&f[0], &d[0], &v[0], &z[0], h, wy)
            for y in range(h):
                dist[y, x] = d[y]
        for y in range(h):
            for x in range(w):
                f[x] = dist[y, x]
            _dt_1d(&f[0], &d[0], &v[0], &z[0], w, wx)
            for x in range(w):
                dist[y, x] = sqrt(d[x])
    return out
