"""Readers and writers for the on-disk formats.

* trajectories: CSV ``traj_id,timestamp,lat,lon`` (optional header row)
* roads: newline-delimited JSON ``{"id": ..., "vertices": [[lat, lon], ...]}``
* imagery: 8-bit RGB PNG plus sidecar JSON ``{origin_lat, origin_lon, resolution}``
* rasters: ``.ftz``, one JSON header line followed by little-endian float32 data
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .projection import GeoRegion
from .raster import RASTER_KINDS, RasterGrid, RasterSummary, RoadPolyline, TrajectoryPoint

log = logging.getLogger(__name__)

FTZ_KINDS = RASTER_KINDS + ("image",)


def read_trajectories(
    path, header: bool = False, summary: RasterSummary | None = None
) -> Iterator[TrajectoryPoint]:
    """Stream points from a CSV file, skipping rows that do not parse."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        if header:
            next(reader, None)
        for lineno, row in enumerate(reader, start=2 if header else 1):
            if not row:
                continue
            try:
                if len(row) != 4:
                    raise ValueError(f"expected 4 columns, got {len(row)}")
                yield TrajectoryPoint(row[0], float(row[1]), float(row[2]), float(row[3]))
            except ValueError as e:
                if summary is not None:
                    summary.read += 1
                    summary.malformed += 1
                    if len(summary.errors) < 20:
                        summary.errors.append(f"line {lineno}: {e}")
                log.debug("skipping line %d of %s: %s", lineno, path, e)


def write_trajectories(path, points, header: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        if header:
            w.writerow(["traj_id", "timestamp", "lat", "lon"])
        for p in points:
            w.writerow([p.traj_id, repr(float(p.timestamp)), repr(float(p.lat)), repr(float(p.lon))])


def read_roads(path) -> tuple[list[RoadPolyline], int]:
    """Return the parsed roads and the number of records skipped."""
    roads, skipped = [], 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                verts = tuple((float(a), float(b)) for a, b in obj["vertices"])
                roads.append(RoadPolyline(str(obj.get("id", lineno)), verts))
            except (ValueError, KeyError, TypeError) as e:
                skipped += 1
                log.debug("skipping road on line %d: %s", lineno, e)
    return roads, skipped


def write_roads(path, roads) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in roads:
            f.write(json.dumps({"id": r.road_id, "vertices": [list(v) for v in r.vertices]}) + "\n")


def _sidecar(path) -> Path:
    return Path(path).with_suffix(".json")


def read_image(path) -> tuple[np.ndarray, dict]:
    """Load an RGB PNG as a ``(3, H, W)`` float32 array in [0, 1] plus its sidecar."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    meta = json.loads(_sidecar(path).read_text())
    return np.ascontiguousarray(arr.transpose(2, 0, 1)), meta


def write_image(path, image: np.ndarray, region: GeoRegion) -> None:
    arr = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(path)
    meta = {
        "origin_lat": region.origin_lat,
        "origin_lon": region.origin_lon,
        "resolution": region.resolution,
    }
    _sidecar(path).write_text(json.dumps(meta))


def write_ftz(path, values: np.ndarray, kind: str) -> None:
    if kind not in FTZ_KINDS:
        raise ValueError(f"unknown raster kind {kind!r}")
    values = np.asarray(values)
    header = json.dumps({"shape": list(values.shape), "kind": kind}, sort_keys=True)
    with open(path, "wb") as f:
        f.write(header.encode("utf-8") + b"\n")
        f.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def read_ftz(path) -> tuple[np.ndarray, str]:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        payload = f.read()
    shape = tuple(int(s) for s in header["shape"])
    values = np.frombuffer(payload, dtype="<f4")
    if values.size != int(np.prod(shape)):
        raise ValueError(f"{path}: payload has {values.size} values, header says {shape}")
    return values.reshape(shape).astype(np.float32), header["kind"]


def write_raster(path, grid: RasterGrid) -> None:
    write_ftz(path, grid.values, grid.kind)


def read_raster(path) -> RasterGrid:
    values, kind = read_ftz(path)
    return RasterGrid(values, kind)


def write_gray_png(path, values: np.ndarray) -> None:
    """Save values in [0, 1] as 8-bit grayscale, ``round(255 * v)``."""
    arr = np.clip(np.round(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)
