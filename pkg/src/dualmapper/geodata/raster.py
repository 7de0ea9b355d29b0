"""Trajectory counting, count scaling and road ground-truth rendering."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .. import _kernels
from .projection import GeoRegion, project

RASTER_KINDS = ("traj_count", "traj_scaled", "image_channel", "label")
DEFAULT_TRAJ_CAP = 256
_CHUNK = 1 << 20


class TrajectoryPoint(NamedTuple):
    traj_id: str
    timestamp: float
    lat: float
    lon: float


@dataclass(frozen=True)
class RoadPolyline:
    road_id: str
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.vertices) < 2:
            raise ValueError(f"road {self.road_id!r} needs at least 2 vertices")


@dataclass
class RasterGrid:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in RASTER_KINDS:
            raise ValueError(f"unknown raster kind {self.kind!r}")
        if self.values.ndim != 2:
            raise ValueError(f"raster must be 2-D, got shape {self.values.shape}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def check(self) -> None:
        """Raise if the values violate the invariants of ``kind``."""
        v = self.values
        if self.kind == "traj_count":
            if (v < 0).any() or (v != np.floor(v)).any():
                raise ValueError("traj_count values must be non-negative integers")
        elif self.kind == "label":
            if not np.isin(v, (0, 1)).all():
                raise ValueError("label values must be 0 or 1")
        elif (v < 0).any() or (v > 1).any():
            raise ValueError(f"{self.kind} values must lie in [0, 1]")


@dataclass
class RasterSummary:
    read: int = 0
    malformed: int = 0
    out_of_region: int = 0
    in_region: int = 0
    errors: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "read": self.read,
            "malformed": self.malformed,
            "out_of_region": self.out_of_region,
            "in_region": self.in_region,
        }


def _coerce(p) -> tuple[float, float] | None:
    try:
        lat = float(p.lat if hasattr(p, "lat") else p[0])
        lon = float(p.lon if hasattr(p, "lon") else p[1])
    except (TypeError, ValueError, IndexError):
        return None
    if not (math.isfinite(lat) and math.isfinite(lon)):
        return None
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        return None
    return lat, lon


def rasterize_trajectories(
    points: Iterable, region: GeoRegion, summary: RasterSummary | None = None
) -> tuple[RasterGrid, RasterSummary]:
    """Count GPS fixes per pixel.

    ``points`` may yield :class:`TrajectoryPoint` records or ``(lat, lon)``
    pairs. A point lands in the cell its projected position floors to; points
    outside the grid and malformed records are tallied in the summary.
    """
    summary = summary if summary is not None else RasterSummary()
    counts = np.zeros(region.shape, dtype=np.int64)
    it = iter(points)
    while True:
        chunk = list(itertools.islice(it, _CHUNK))
        if not chunk:
            break
        lat = np.empty(len(chunk))
        lon = np.empty(len(chunk))
        n = 0
        for p in chunk:
            ll = _coerce(p)
            if ll is None:
                summary.malformed += 1
                continue
            lat[n], lon[n] = ll
            n += 1
        summary.read += len(chunk)
        if n == 0:
            continue
        rows, cols = project(lat[:n], lon[:n], region)
        part = _kernels.count_points(rows, cols, region.height_px, region.width_px)
        inside = int(part.sum())
        summary.in_region += inside
        summary.out_of_region += n - inside
        counts += part
    return RasterGrid(counts.astype(np.float32), "traj_count"), summary


def scale_traj(counts: RasterGrid | np.ndarray, cap: int = DEFAULT_TRAJ_CAP) -> RasterGrid:
    """Log-compress counts into [0, 1], saturating at ``cap``."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    values = counts.values if isinstance(counts, RasterGrid) else np.asarray(counts)
    values = values.astype(np.float64)
    denom = math.log1p(cap)
    scaled = np.minimum(np.log1p(values), denom) / denom
    return RasterGrid(scaled.astype(np.float32), "traj_scaled")


def polyline_segments(roads: Sequence[RoadPolyline], region: GeoRegion) -> np.ndarray:
    """Project every polyline edge to an ``(n, 4)`` array of ``(r0, c0, r1, c1)``."""
    segs = []
    for road in roads:
        v = np.asarray(road.vertices, dtype=np.float64)
        rows, cols = project(v[:, 0], v[:, 1], region)
        segs.append(np.stack([rows[:-1], cols[:-1], rows[1:], cols[1:]], axis=1))
    if not segs:
        return np.zeros((0, 4))
    return np.concatenate(segs, axis=0)


def render_segments(segs: np.ndarray, shape: tuple[int, int], width_px: float = 10) -> np.ndarray:
    if width_px < 1:
        raise ValueError(f"width_px must be >= 1, got {width_px}")
    segs = np.ascontiguousarray(segs, dtype=np.float64).reshape(-1, 4)
    return _kernels.render_segments(segs, shape[0], shape[1], width_px / 2.0)


def render_ground_truth(
    roads: Sequence[RoadPolyline], region: GeoRegion, width_px: float = 10
) -> RasterGrid:
    """Draw roads as bands: a pixel is road iff its centre is within
    ``width_px / 2`` of some segment (round caps and joins).
    """
    segs = polyline_segments(roads, region)
    mask = render_segments(segs, region.shape, width_px)
    return RasterGrid(mask.astype(np.float32), "label")
