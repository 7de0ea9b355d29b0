"""Local equirectangular projection onto a metric pixel grid."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_M = 6371008.8
METERS_PER_DEGREE = math.pi * EARTH_RADIUS_M / 180.0


@dataclass(frozen=True)
class GeoRegion:
    """A north-up pixel grid anchored at its top-left corner."""

    origin_lat: float
    origin_lon: float
    width_px: int
    height_px: int
    resolution: float = 1.0

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError(f"region size must be positive, got {self.height_px}x{self.width_px}")
        if not self.resolution > 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if not -90.0 <= self.origin_lat <= 90.0 or not -180.0 <= self.origin_lon <= 180.0:
            raise ValueError("region origin outside valid lat/lon range")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height_px, self.width_px)

    def to_dict(self) -> dict:
        return {
            "origin_lat": self.origin_lat,
            "origin_lon": self.origin_lon,
            "width_px": self.width_px,
            "height_px": self.height_px,
            "resolution": self.resolution,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeoRegion":
        return cls(
            origin_lat=float(d["origin_lat"]),
            origin_lon=float(d["origin_lon"]),
            width_px=int(d["width_px"]),
            height_px=int(d["height_px"]),
            resolution=float(d.get("resolution", 1.0)),
        )


def project(lat, lon, region: GeoRegion):
    """Map latitude/longitude to continuous ``(row, col)`` pixel coordinates.

    Works on scalars or arrays. Points outside the region are returned as-is;
    callers filter them.
    """
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    coslat = math.cos(math.radians(region.origin_lat))
    row = (region.origin_lat - lat) * METERS_PER_DEGREE / region.resolution
    col = (lon - region.origin_lon) * coslat * METERS_PER_DEGREE / region.resolution
    if row.ndim == 0:
        return float(row), float(col)
    return row, col


def unproject(row, col, region: GeoRegion):
    """Inverse of :func:`project`."""
    row = np.asarray(row, dtype=np.float64)
    col = np.asarray(col, dtype=np.float64)
    coslat = math.cos(math.radians(region.origin_lat))
    lat = region.origin_lat - row * region.resolution / METERS_PER_DEGREE
    lon = region.origin_lon + col * region.resolution / (coslat * METERS_PER_DEGREE)
    if lat.ndim == 0:
        return float(lat), float(lon)
    return lat, lon
