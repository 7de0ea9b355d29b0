# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rasterization kernels.

Both functions mirror ``_kernels_py`` operation for operation so the two
backends agree bitwise.
"""
import numpy as np

from libc.math cimport floor, isnan


def count_points(const double[::1] rows, const double[::1] cols, Py_ssize_t height, Py_ssize_t width):
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t i, r, c
    cdef double fr, fc
    out = np.zeros((height, width), dtype=np.int64)
    cdef long long[:, ::1] grid = out
    if cols.shape[0] != n:
        raise ValueError("rows and cols must have equal length")
    for i in range(n):
        if isnan(rows[i]) or isnan(cols[i]):
            continue
        fr = floor(rows[i])
        fc = floor(cols[i])
        if fr < 0 or fc < 0 or fr >= height or fc >= width:
            continue
        r = <Py_ssize_t>fr
        c = <Py_ssize_t>fc
        grid[r, c] += 1
    return out


def render_segments(const double[:, ::1] segs, Py_ssize_t height, Py_ssize_t width, double radius):
    """Mark pixels whose centre lies within ``radius`` of any segment.

    ``segs`` rows are ``(r0, c0, r1, c1)`` in continuous pixel coordinates.
    """
    cdef Py_ssize_t n = segs.shape[0]
    cdef Py_ssize_t k, r, c, rlo, rhi, clo, chi
    cdef double r0, c0, r1, c1, dr, dc, len2, pr, pc, t, qr, qc, d2, rad2
    out = np.zeros((height, width), dtype=np.uint8)
    cdef unsigned char[:, ::1] grid = out
    if segs.shape[1] != 4:
        raise ValueError("segments must have shape (n, 4)")
    rad2 = radius * radius
    for k in range(n):
        r0 = segs[k, 0]
        c0 = segs[k, 1]
        r1 = segs[k, 2]
        c1 = segs[k, 3]
        dr = r1 - r0
        dc = c1 - c0
        len2 = dr * dr + dc * dc
        if len2 == 0.0:
            continue
        rlo = <Py_ssize_t>max(floor(min(r0, r1) - radius - 0.5), 0.0)
        rhi = <Py_ssize_t>min(floor(max(r0, r1) + radius - 0.5) + 1.0, <double>height - 1.0)
        clo = <Py_ssize_t>max(floor(min(c0, c1) - radius - 0.5), 0.0)
        chi = <Py_ssize_t>min(floor(max(c0, c1) + radius - 0.5) + 1.0, <double>width - 1.0)
        for r in range(rlo, rhi + 1):
            pr = r + 0.5
            for c in range(clo, chi + 1):
                if grid[r, c]:
                    continue
                pc = c + 0.5
                t = ((pr - r0) * dr + (pc - c0) * dc) / len2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                qr = r0 + t * dr
                qc = c0 + t * dc
                d2 = (pr - qr) * (pr - qr) + (pc - qc) * (pc - qc)
                if d2 <= rad2:
                    grid[r, c] = 1
    return out
