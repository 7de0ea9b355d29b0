"""Numpy implementations of the rasterization kernels.

Used when the compiled extension is unavailable. The arithmetic follows
``_kernels_cy.pyx`` step for step so both backends produce identical grids.
"""
from __future__ import annotations

import numpy as np


def count_points(rows: np.ndarray, cols: np.ndarray, height: int, width: int) -> np.ndarray:
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    cols = np.ascontiguousarray(cols, dtype=np.float64)
    if rows.shape != cols.shape:
        raise ValueError("rows and cols must have equal length")
    fr = np.floor(rows)
    fc = np.floor(cols)
    keep = ~(np.isnan(fr) | np.isnan(fc))
    keep &= (fr >= 0) & (fc >= 0) & (fr < height) & (fc < width)
    flat = fr[keep].astype(np.int64) * width + fc[keep].astype(np.int64)
    counts = np.bincount(flat, minlength=height * width)
    return counts.reshape(height, width).astype(np.int64)


def render_segments(segs: np.ndarray, height: int, width: int, radius: float) -> np.ndarray:
    segs = np.ascontiguousarray(segs, dtype=np.float64).reshape(-1, 4)
    out = np.zeros((height, width), dtype=np.uint8)
    rad2 = radius * radius
    for r0, c0, r1, c1 in segs:
        dr = r1 - r0
        dc = c1 - c0
        len2 = dr * dr + dc * dc
        if len2 == 0.0:
            continue
        rlo = int(max(np.floor(min(r0, r1) - radius - 0.5), 0.0))
        rhi = int(min(np.floor(max(r0, r1) + radius - 0.5) + 1.0, height - 1.0))
        clo = int(max(np.floor(min(c0, c1) - radius - 0.5), 0.0))
        chi = int(min(np.floor(max(c0, c1) + radius - 0.5) + 1.0, width - 1.0))
        if rlo > rhi or clo > chi:
            continue
        pr = np.arange(rlo, rhi + 1, dtype=np.float64)[:, None] + 0.5
        pc = np.arange(clo, chi + 1, dtype=np.float64)[None, :] + 0.5
        t = ((pr - r0) * dr + (pc - c0) * dc) / len2
        t = np.clip(t, 0.0, 1.0)
        qr = r0 + t * dr
        qc = c0 + t * dc
        d2 = (pr - qr) * (pr - qr) + (pc - qc) * (pc - qc)
        out[rlo : rhi + 1, clo : chi + 1] |= (d2 <= rad2).astype(np.uint8)
    return out
