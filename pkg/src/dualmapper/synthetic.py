"""Procedural road scenes for smoke runs and the acceptance experiments.

A scene is a set of straight or bent road polylines drawn as 10 px bands,
an RGB image where roads are grey on a textured background (with occasional
tree-crown occlusions), and GPS fixes scattered around the centrelines of the
roads that carry traffic.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .geodata import io as gio
from .geodata.projection import GeoRegion, unproject
from .geodata.raster import RoadPolyline, TrajectoryPoint, render_segments, scale_traj
from .geodata.sampling import Rect, SplitLayout, TileSample

ROAD_WIDTH_PX = 10


@dataclass
class Scene:
    roads: list[np.ndarray]  # each (k, 2) pixel (row, col) vertices
    label: np.ndarray  # (H, W) float32
    image: np.ndarray  # (3, H, W) float32
    points: np.ndarray  # (n, 2) pixel (row, col)
    counts: np.ndarray  # (H, W) int64

    def traj(self, cap: int = 256) -> np.ndarray:
        return scale_traj(self.counts, cap).values

    def tile(self, cap: int = 256) -> TileSample:
        return TileSample(self.image, self.traj(cap), self.label, (0, 0), self.points, cap)


def _random_road(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    kind = rng.integers(3)
    if kind == 0:  # horizontal-ish
        r0, r1 = rng.uniform(0.1 * h, 0.9 * h, size=2)
        pts = [(r0, -20.0), (r1, w + 20.0)]
    elif kind == 1:  # vertical-ish
        c0, c1 = rng.uniform(0.1 * w, 0.9 * w, size=2)
        pts = [(-20.0, c0), (h + 20.0, c1)]
    else:  # bent road between two edges
        a = (rng.uniform(0, h), -20.0) if rng.random() < 0.5 else (-20.0, rng.uniform(0, w))
        b = (rng.uniform(0, h), w + 20.0) if rng.random() < 0.5 else (h + 20.0, rng.uniform(0, w))
        mid = (rng.uniform(0.25 * h, 0.75 * h), rng.uniform(0.25 * w, 0.75 * w))
        pts = [a, mid, b]
    return np.asarray(pts, dtype=np.float64)


def _smooth_noise(rng: np.random.Generator, h: int, w: int, cell: int = 16) -> np.ndarray:
    coarse = rng.random((h // cell + 2, w // cell + 2))
    fine = coarse.repeat(cell, 0).repeat(cell, 1)
    k = np.ones(cell) / cell
    fine = np.apply_along_axis(lambda v: np.convolve(v, k, mode="same"), 0, fine)
    fine = np.apply_along_axis(lambda v: np.convolve(v, k, mode="same"), 1, fine)
    return fine[:h, :w]


def make_scene(
    height: int,
    width: int,
    seed: int,
    n_roads: tuple[int, int] = (2, 5),
    traffic_prob: float = 0.8,
    density: tuple[float, float] = (1.0, 4.0),
    gps_sigma_px: float = 2.0,
    occlusions: int = 2,
) -> Scene:
    rng = np.random.default_rng(seed)
    roads = [_random_road(rng, height, width) for _ in range(rng.integers(n_roads[0], n_roads[1] + 1))]
    segs = np.concatenate([np.hstack([r[:-1], r[1:]]) for r in roads])
    label = render_segments(segs, (height, width), ROAD_WIDTH_PX).astype(np.float32)

    ground = _smooth_noise(rng, height, width)
    base = np.stack([0.25 + 0.2 * ground, 0.35 + 0.25 * ground, 0.15 + 0.15 * ground])
    base += rng.normal(0, 0.04, size=base.shape)
    road_rgb = np.array([0.55, 0.55, 0.57])[:, None, None] + rng.normal(0, 0.03, size=(3, height, width))
    image = np.where(label[None] > 0, road_rgb, base)
    for _ in range(occlusions):
        cr, cc = rng.uniform(0, height), rng.uniform(0, width)
        rad = rng.uniform(6, 14)
        rr, cc_ = np.ogrid[:height, :width]
        crown = (rr + 0.5 - cr) ** 2 + (cc_ + 0.5 - cc) ** 2 <= rad**2
        image[:, crown] = np.array([0.1, 0.3, 0.08])[:, None] + rng.normal(0, 0.03, size=(3, int(crown.sum())))
    image = np.clip(image, 0, 1).astype(np.float32)

    pts = []
    for r in roads:
        if rng.random() >= traffic_prob:
            continue
        seg_len = np.hypot(*np.diff(r, axis=0).T)
        n = rng.poisson(rng.uniform(*density) * seg_len.sum())
        which = rng.choice(len(seg_len), size=n, p=seg_len / seg_len.sum())
        t = rng.random(n)[:, None]
        pts.append(r[which] + t * (r[which + 1] - r[which]) + rng.normal(0, gps_sigma_px, size=(n, 2)))
    points = np.concatenate(pts) if pts else np.zeros((0, 2))
    inside = (points[:, 0] >= 0) & (points[:, 0] < height) & (points[:, 1] >= 0) & (points[:, 1] < width)
    points = points[inside]
    counts = _kernels.count_points(
        np.ascontiguousarray(points[:, 0]), np.ascontiguousarray(points[:, 1]), height, width
    )
    return Scene(roads, label, image, points, counts)


def make_tiles(n: int, size: int = 224, seed: int = 0, cap: int = 256, **kw) -> list[TileSample]:
    return [make_scene(size, size, seed * 100003 + k, **kw).tile(cap) for k in range(n)]


def half_blank(tile: TileSample, rng: np.random.Generator) -> tuple[TileSample, np.ndarray, np.ndarray]:
    """Blank the image in one half of the tile and the trajectories in the other.

    Returns the tile plus boolean masks of the image-blanked and
    trajectory-blanked pixels.
    """
    h, w = tile.shape
    img_mask = np.zeros((h, w), dtype=bool)
    if rng.random() < 0.5:
        img_mask[:, : w // 2] = True
    else:
        img_mask[: h // 2, :] = True
    if rng.random() < 0.5:
        img_mask = ~img_mask
    out = tile.copy()
    out.image[:, img_mask] = 0.0
    out.traj[~img_mask] = 0.0
    if out.points is not None:
        r = np.clip(out.points[:, 0].astype(int), 0, h - 1)
        c = np.clip(out.points[:, 1].astype(int), 0, w - 1)
        out.points = out.points[img_mask[r, c]]
    return out, img_mask, ~img_mask


def write_region(
    out_dir,
    seed: int = 0,
    size_px: tuple[int, int] = (896, 896),
    origin: tuple[float, float] = (41.16, -8.64),
) -> dict:
    """Generate a synthetic region and write it in the external file formats.

    ``size_px`` is ``(height, width)``. Returns a pipeline config dict whose
    paths point at the written files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h, w = size_px
    region = GeoRegion(origin[0], origin[1], width_px=w, height_px=h, resolution=1.0)
    rng = np.random.default_rng(seed)
    n_roads = max(3, (h * w) // (224 * 224) * 2)
    scene = make_scene(h, w, seed, n_roads=(n_roads, n_roads + 2), occlusions=max(2, n_roads // 2))

    roads = []
    for k, r in enumerate(scene.roads):
        lat, lon = unproject(r[:, 0], r[:, 1], region)
        roads.append(RoadPolyline(f"r{k}", tuple(zip(lat.tolist(), lon.tolist()))))
    gio.write_roads(out / "roads.ndjson", roads)

    lat, lon = unproject(scene.points[:, 0], scene.points[:, 1], region)
    order = rng.permutation(len(lat))
    pts = (
        TrajectoryPoint(f"t{i // 50}", float(i), float(lat[j]), float(lon[j])) for i, j in enumerate(order)
    )
    gio.write_trajectories(out / "trajectories.csv", pts, header=True)
    gio.write_image(out / "image.png", scene.image, region)

    if h < 672 or w < 672:
        raise ValueError("synthetic region needs at least 672x672 pixels")
    test = Rect(w - 448, h - 448, 448, 448)
    val = Rect(0, h - 224, 224, 224)
    split = SplitLayout(width_px=w, height_px=h, val=[val], test=[test])
    split.save(out / "split.json")

    config = {
        "seed": seed,
        "region": region.to_dict(),
        "split": "split.json",
        "paths": {
            "trajectories": "trajectories.csv",
            "trajectories_header": True,
            "roads": "roads.ndjson",
            "image": "image.png",
            "traj_count": "traj_count.ftz",
            "traj_scaled": "traj_scaled.ftz",
            "label": "label.ftz",
        },
        "traj_cap": 256,
        "road_width_px": ROAD_WIDTH_PX,
        "model": {"width": 4},
        "train": {"learning_rate": 1e-4, "batch_size": 4, "epochs": 2, "tile_size": 224},
        "weights": {"image": 0.5, "traj": 0.5, "fused": 0.5, "refined": 1.0},
        "sweep": {"blur_factors": [1, 2, 4, 8], "noise_sigmas_m": [0, 5, 10, 20]},
    }
    (out / "config.json").write_text(json.dumps(config, indent=2))
    return config
