"""Split layouts, epoch accounting and random tile sampling."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TILE_SIZE = 224


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle; ``x`` is the column axis, ``y`` the row axis."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"rectangle must have positive extent: {self}")

    @property
    def x1(self) -> int:
        return self.x0 + self.w

    @property
    def y1(self) -> int:
        return self.y0 + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def overlaps(self, other: "Rect") -> bool:
        return self.x0 < other.x1 and other.x0 < self.x1 and self.y0 < other.y1 and other.y0 < self.y1

    def to_dict(self) -> dict:
        return {"x0": self.x0, "y0": self.y0, "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, d: dict) -> "Rect":
        return cls(int(d["x0"]), int(d["y0"]), int(d["w"]), int(d["h"]))


@dataclass
class SplitLayout:
    """Training, validation and test areas of one region.

    An empty ``train`` list means the whole region minus val/test.
    """

    width_px: int
    height_px: int
    train: list[Rect] = field(default_factory=list)
    val: list[Rect] = field(default_factory=list)
    test: list[Rect] = field(default_factory=list)

    def __post_init__(self):
        for a in self.val:
            for b in self.test:
                if a.overlaps(b):
                    raise ValueError(f"validation rect {a} overlaps test rect {b}")

    @property
    def excluded(self) -> list[Rect]:
        return self.val + self.test

    def train_rects(self) -> list[Rect]:
        return self.train or [Rect(0, 0, self.width_px, self.height_px)]

    def to_dict(self) -> dict:
        return {
            "width_px": self.width_px,
            "height_px": self.height_px,
            "train": [r.to_dict() for r in self.train],
            "val": [r.to_dict() for r in self.val],
            "test": [r.to_dict() for r in self.test],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitLayout":
        return cls(
            width_px=int(d["width_px"]),
            height_px=int(d["height_px"]),
            train=[Rect.from_dict(r) for r in d.get("train", [])],
            val=[Rect.from_dict(r) for r in d.get("val", [])],
            test=[Rect.from_dict(r) for r in d.get("test", [])],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "SplitLayout":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _cells(include, exclude):
    """Decompose ``union(include) - union(exclude)`` into disjoint boxes.

    Boxes are ``(y0, y1, x0, x1)`` half-open integer intervals.
    """
    include = [b for b in include if b[0] < b[1] and b[2] < b[3]]
    if not include:
        return []
    ys = sorted({v for b in include + exclude for v in b[:2]})
    xs = sorted({v for b in include + exclude for v in b[2:]})
    out = []
    for ya, yb in zip(ys, ys[1:]):
        for xa, xb in zip(xs, xs[1:]):
            def inside(b):
                return b[0] <= ya and yb <= b[1] and b[2] <= xa and xb <= b[3]

            if any(inside(b) for b in include) and not any(inside(b) for b in exclude):
                out.append((ya, yb, xa, xb))
    return out


def training_area(split: SplitLayout) -> int:
    """Pixels of the training area: train rects inside the region minus val/test."""
    region = (0, split.height_px, 0, split.width_px)
    include = [
        (max(r.y0, region[0]), min(r.y1, region[1]), max(r.x0, region[2]), min(r.x1, region[3]))
        for r in split.train_rects()
    ]
    exclude = [(r.y0, r.y1, r.x0, r.x1) for r in split.excluded]
    return sum((b[1] - b[0]) * (b[3] - b[2]) for b in _cells(include, exclude))


def epoch_size(split: SplitLayout, size: int = TILE_SIZE) -> int:
    """Number of samples per epoch, ``floor(S_train / size^2)`` but at least 1."""
    return max(1, training_area(split) // (size * size))


def admissible_corners(split: SplitLayout, size: int = TILE_SIZE) -> list[tuple[int, int, int, int]]:
    """Boxes of top-left corners whose ``size``-crop lies in a train rect and
    avoids every val/test rect."""
    hmax = split.height_px - size + 1
    wmax = split.width_px - size + 1
    include = []
    for r in split.train_rects():
        include.append((max(r.y0, 0), min(r.y1 - size + 1, hmax), max(r.x0, 0), min(r.x1 - size + 1, wmax)))
    exclude = [(e.y0 - size + 1, e.y1, e.x0 - size + 1, e.x1) for e in split.excluded]
    return _cells(include, exclude)


class CornerSampler:
    """Uniform sampler over the admissible top-left corners of a split."""

    def __init__(self, split: SplitLayout, size: int = TILE_SIZE):
        self.size = size
        self.boxes = admissible_corners(split, size)
        areas = np.array([(b[1] - b[0]) * (b[3] - b[2]) for b in self.boxes], dtype=np.int64)
        self.total = int(areas.sum())
        if self.total == 0:
            raise ValueError(f"no admissible {size}x{size} crop in split layout")
        self._cum = np.cumsum(areas)

    def draw(self, rng: np.random.Generator) -> tuple[int, int]:
        k = int(rng.integers(self.total))
        i = int(np.searchsorted(self._cum, k, side="right"))
        y0, y1, x0, x1 = self.boxes[i]
        off = k - (int(self._cum[i - 1]) if i else 0)
        w = x1 - x0
        return y0 + off // w, x0 + off % w


@dataclass
class RegionRasters:
    """Co-registered rasters of one region.

    ``points`` optionally keeps the projected GPS fixes as ``(row, col)`` pixel
    coordinates so that noise can be injected before re-rasterizing.
    """

    image: np.ndarray  # (3, H, W) in [0, 1]
    traj: np.ndarray  # (H, W) scaled counts
    label: np.ndarray  # (H, W) binary
    points: np.ndarray | None = None
    traj_cap: int = 256

    def __post_init__(self):
        shape = self.traj.shape
        if self.image.shape != (3,) + shape or self.label.shape != shape:
            raise ValueError(
                f"raster shapes disagree: image {self.image.shape}, traj {shape}, label {self.label.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.traj.shape

    def crop(self, row: int, col: int, size: int) -> "TileSample":
        h, w = self.shape
        if row < 0 or col < 0 or row + size > h or col + size > w:
            raise ValueError(f"crop ({row}, {col}) of size {size} leaves the {h}x{w} region")
        sl = (slice(row, row + size), slice(col, col + size))
        pts = None
        if self.points is not None:
            p = self.points
            keep = (p[:, 0] >= row) & (p[:, 0] < row + size) & (p[:, 1] >= col) & (p[:, 1] < col + size)
            pts = p[keep] - np.array([row, col], dtype=p.dtype)
        return TileSample(
            image=self.image[:, sl[0], sl[1]].copy(),
            traj=self.traj[sl].copy(),
            label=self.label[sl].copy(),
            origin=(row, col),
            points=pts,
            traj_cap=self.traj_cap,
        )


@dataclass
class TileSample:
    image: np.ndarray  # (3, s, s)
    traj: np.ndarray  # (s, s)
    label: np.ndarray  # (s, s)
    origin: tuple[int, int] = (0, 0)
    points: np.ndarray | None = None  # tile-local (row, col)
    traj_cap: int = 256

    def __post_init__(self):
        shape = self.traj.shape
        if self.image.shape != (3,) + shape or self.label.shape != shape:
            raise ValueError("tile channels must share height and width")

    @property
    def shape(self) -> tuple[int, int]:
        return self.traj.shape

    def copy(self) -> "TileSample":
        return TileSample(
            self.image.copy(),
            self.traj.copy(),
            self.label.copy(),
            self.origin,
            None if self.points is None else self.points.copy(),
            self.traj_cap,
        )


def sample_tile(
    seed: int,
    index: int,
    rasters: RegionRasters,
    split: SplitLayout,
    size: int = TILE_SIZE,
    corners: CornerSampler | None = None,
) -> TileSample:
    """Draw the ``index``-th training crop of the sequence fixed by ``seed``."""
    corners = corners or CornerSampler(split, size)
    rng = np.random.default_rng([seed, index])
    row, col = corners.draw(rng)
    return rasters.crop(row, col, size)


class RegionSampler:
    """Seeded stream of training crops from a region."""

    def __init__(self, rasters: RegionRasters, split: SplitLayout, seed: int, size: int = TILE_SIZE):
        if rasters.shape != (split.height_px, split.width_px):
            raise ValueError(f"rasters {rasters.shape} do not match split {split.height_px}x{split.width_px}")
        self.rasters = rasters
        self.split = split
        self.seed = seed
        self.size = size
        self.corners = CornerSampler(split, size)

    def epoch_size(self) -> int:
        return epoch_size(self.split, self.size)

    def batch(self, step: int, batch_size: int) -> list[TileSample]:
        start = step * batch_size
        return [
            sample_tile(self.seed, start + k, self.rasters, self.split, self.size, self.corners)
            for k in range(batch_size)
        ]


class FixedTileSampler:
    """Cycles through a fixed tile list in a seeded order, reshuffled each pass."""

    def __init__(self, tiles: list[TileSample], seed: int):
        if not tiles:
            raise ValueError("need at least one tile")
        self.tiles = tiles
        self.seed = seed

    def epoch_size(self) -> int:
        return len(self.tiles)

    def batch(self, step: int, batch_size: int) -> list[TileSample]:
        n = len(self.tiles)
        out = []
        for k in range(step * batch_size, (step + 1) * batch_size):
            perm = np.random.default_rng([self.seed, k // n]).permutation(n)
            out.append(self.tiles[perm[k % n]])
        return out
