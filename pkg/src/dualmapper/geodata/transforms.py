"""Test-time corruptions: quadrant information loss, image blur, GPS noise."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .. import _kernels
from .projection import METERS_PER_DEGREE
from .raster import TrajectoryPoint, scale_traj
from .sampling import TileSample


@dataclass(frozen=True)
class AttackSpec:
    """Quadrants to blank, numbered 1..4 counterclockwise from top-right."""

    image_quadrant: int
    traj_quadrant: int

    def __post_init__(self):
        for q in (self.image_quadrant, self.traj_quadrant):
            if q not in (1, 2, 3, 4):
                raise ValueError(f"quadrant must be in 1..4, got {q}")
        if self.image_quadrant == self.traj_quadrant:
            raise ValueError("image and trajectory quadrants must differ")

    @classmethod
    def random(cls, rng: np.random.Generator) -> "AttackSpec":
        a, b = rng.choice(4, size=2, replace=False) + 1
        return cls(int(a), int(b))


def quadrant_slices(shape: tuple[int, int], quadrant: int) -> tuple[slice, slice]:
    h, w = shape
    if h % 2 or w % 2:
        raise ValueError(f"tile {h}x{w} cannot be split into 4 equal quadrants")
    top, bottom = slice(0, h // 2), slice(h // 2, h)
    left, right = slice(0, w // 2), slice(w // 2, w)
    return {1: (top, right), 2: (top, left), 3: (bottom, left), 4: (bottom, right)}[quadrant]


def apply_info_loss(tile: TileSample, spec: AttackSpec) -> TileSample:
    """Zero the image in one quadrant and the trajectory raster in another."""
    out = tile.copy()
    ri, ci = quadrant_slices(tile.shape, spec.image_quadrant)
    rt, ct = quadrant_slices(tile.shape, spec.traj_quadrant)
    out.image[:, ri, ci] = 0.0
    out.traj[rt, ct] = 0.0
    if out.points is not None:
        p = out.points
        inq = (p[:, 0] >= rt.start) & (p[:, 0] < rt.stop) & (p[:, 1] >= ct.start) & (p[:, 1] < ct.stop)
        out.points = p[~inq]
    return out


def blur_image(image: np.ndarray, factor: int) -> np.ndarray:
    """Box-average ``factor x factor`` blocks, then repeat each block value."""
    if factor < 1:
        raise ValueError(f"blur factor must be >= 1, got {factor}")
    if factor == 1:
        return image.copy()
    c, h, w = image.shape
    if h % factor or w % factor:
        raise ValueError(f"image {h}x{w} not divisible by blur factor {factor}")
    small = image.reshape(c, h // factor, factor, w // factor, factor).mean(axis=(2, 4), dtype=np.float64)
    return small.repeat(factor, axis=1).repeat(factor, axis=2).astype(image.dtype)


def jitter_pixels(points: np.ndarray, sigma_px: float, rng: np.random.Generator) -> np.ndarray:
    return points + rng.normal(0.0, sigma_px, size=points.shape)


def degrade(
    tile: TileSample,
    image_blur_factor: int = 1,
    gps_noise_sigma_m: float = 0.0,
    resolution: float = 1.0,
    seed: int = 0,
) -> TileSample:
    """Lower image resolution and/or re-rasterize noisy GPS fixes.

    Noise needs ``tile.points``; factor 1 with sigma 0 returns an unchanged copy.
    """
    if gps_noise_sigma_m < 0:
        raise ValueError("noise sigma must be non-negative")
    out = tile.copy()
    out.image = blur_image(tile.image, image_blur_factor)
    if gps_noise_sigma_m > 0:
        if tile.points is None:
            raise ValueError("tile carries no GPS points to perturb")
        rng = np.random.default_rng(seed)
        pts = jitter_pixels(tile.points.astype(np.float64), gps_noise_sigma_m / resolution, rng)
        h, w = tile.shape
        counts = _kernels.count_points(
            np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]), h, w
        )
        out.traj = scale_traj(counts, tile.traj_cap).values
        out.points = pts
    return out


def add_gps_noise(
    points: Iterable[TrajectoryPoint], sigma_m: float, seed: int = 0
) -> Iterator[TrajectoryPoint]:
    """Perturb each fix by isotropic Gaussian noise of ``sigma_m`` metres per axis."""
    rng = np.random.default_rng(seed)
    for p in points:
        dn, de = rng.normal(0.0, sigma_m, size=2)
        lat = p.lat + dn / METERS_PER_DEGREE
        lon = p.lon + de / (METERS_PER_DEGREE * math.cos(math.radians(p.lat)))
        yield TrajectoryPoint(p.traj_id, p.timestamp, lat, lon)
