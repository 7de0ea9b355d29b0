"""Region metrics, stitched inference, gate export and robustness harnesses."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
from PIL import Image

from .geodata.io import write_gray_png
from .geodata.sampling import Rect, TileSample
from .geodata.transforms import AttackSpec, apply_info_loss, degrade

THRESHOLD = 0.5
CELL = 224
CONTEXT = 448


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class Metrics:
    iou: float
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts = field(default_factory=ConfusionCounts)
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        c = self.counts
        return {
            "iou": self.iou,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "tp": c.tp,
            "fp": c.fp,
            "fn": c.fn,
            "tn": c.tn,
            "flags": list(self.flags),
        }


def confusion(pred, gt) -> ConfusionCounts:
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    return ConfusionCounts(tp, fp, fn, pred.size - tp - fp - fn)


def _ratio(num: int, den: int, flag: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def metrics(c: ConfusionCounts) -> Metrics:
    """IoU, precision, recall and F1 of road pixels; empty denominators give 0 plus a flag."""
    flags: list[str] = []
    iou = _ratio(c.tp, c.tp + c.fp + c.fn, "degenerate_iou", flags)
    precision = _ratio(c.tp, c.tp + c.fp, "degenerate_precision", flags)
    recall = _ratio(c.tp, c.tp + c.fn, "degenerate_recall", flags)
    if precision + recall == 0:
        flags.append("degenerate_f1")
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return Metrics(iou, precision, recall, f1, c, flags)


def _tensors(tile: TileSample):
    image = torch.from_numpy(np.ascontiguousarray(tile.image, dtype=np.float32)).unsqueeze(0)
    traj = torch.from_numpy(np.ascontiguousarray(tile.traj, dtype=np.float32))[None, None]
    return image, traj


@torch.no_grad()
def run_tile(model, tile: TileSample, keep_features: bool = False):
    """Eval-mode forward pass on one tile."""
    was = model.training
    model.eval()
    try:
        return model(*_tensors(tile), keep_features=keep_features)
    finally:
        model.train(was)


def evaluate_tiles(model, tiles: Iterable[TileSample], threshold: float = THRESHOLD) -> ConfusionCounts:
    total = ConfusionCounts()
    for tile in tiles:
        prob = run_tile(model, tile).road_prob[0].numpy()
        total = total + confusion(prob >= threshold, tile.label > 0.5)
    return total


def _window(array: np.ndarray, row: int, col: int, size: int) -> np.ndarray:
    """``size x size`` window at ``(row, col)`` over the last two axes, zero outside."""
    h, w = array.shape[-2:]
    out = np.zeros(array.shape[:-2] + (size, size), dtype=np.float32)
    r0, c0 = max(row, 0), max(col, 0)
    r1, c1 = min(row + size, h), min(col + size, w)
    if r0 < r1 and c0 < c1:
        out[..., r0 - row : r1 - row, c0 - col : c1 - col] = array[..., r0:r1, c0:c1]
    return out


def stitch_predict(
    model,
    image: np.ndarray,
    traj: np.ndarray,
    rect: Rect,
    cell: int = CELL,
    context: int = CONTEXT,
    order: Sequence[tuple[int, int]] | None = None,
    threshold: float = THRESHOLD,
    return_prob: bool = False,
) -> np.ndarray:
    """Predict ``rect`` cell by cell from centred context windows.

    Each ``cell``-sized block is predicted from a ``context``-sized window
    centred on it (zero-padded outside the region); only the central block of
    the refined road probability is kept.
    """
    if rect.w % cell or rect.h % cell:
        raise ValueError(f"rect {rect.w}x{rect.h} is not a multiple of the {cell}px cell")
    margin = (context - cell) // 2
    prob = np.zeros((rect.h, rect.w), dtype=np.float32)
    cells = [(i, j) for i in range(rect.h // cell) for j in range(rect.w // cell)]
    if order is not None:
        if sorted(order) != sorted(cells):
            raise ValueError("order must be a permutation of the cell grid")
        cells = list(order)
    for i, j in cells:
        row = rect.y0 + i * cell - margin
        col = rect.x0 + j * cell - margin
        tile = TileSample(_window(image, row, col, context), _window(traj, row, col, context),
                          np.zeros((context, context), np.float32))
        p = run_tile(model, tile).road_prob[0].numpy()
        prob[i * cell : (i + 1) * cell, j * cell : (j + 1) * cell] = p[margin : margin + cell, margin : margin + cell]
    if return_prob:
        return prob
    return (prob >= threshold).astype(np.uint8)


def export_gates(model, tile: TileSample, out_dir) -> list[Path]:
    """Write ``gate_image_L{i}.png`` and ``gate_traj_L{i}.png`` for levels 1..5."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_tile(model, tile)
    paths = []
    for lvl, g in enumerate(result.gates, start=1):
        for name, values in (("image", g.image), ("traj", g.traj)):
            p = out / f"gate_{name}_L{lvl}.png"
            write_gray_png(p, values[0].numpy())
            paths.append(p)
    return paths


def export_predictions(model, tile: TileSample, out_dir) -> list[Path]:
    """Grayscale road-probability maps of every stream at every level."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = run_tile(model, tile)
    paths = []
    for stream, maps in result.preds.items():
        for lvl, p in enumerate(maps, start=1):
            path = out / f"pred_{stream}_L{lvl}.png"
            write_gray_png(path, p[0].numpy())
            paths.append(path)
    return paths


def write_prediction_pngs(pred: np.ndarray, gt: np.ndarray | None, out_dir, stem: str = "prediction") -> list[Path]:
    """Save the binary map as a 1-bit PNG and, given ground truth, an error overlay.

    Overlay colours: white true positive, red false negative, blue false positive.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pred = np.asarray(pred).astype(bool)
    paths = [out / f"{stem}.png"]
    Image.fromarray(pred).convert("1").save(paths[0])
    if gt is not None:
        gt = np.asarray(gt).astype(bool)
        rgb = np.zeros(pred.shape + (3,), dtype=np.uint8)
        rgb[pred & gt] = (255, 255, 255)
        rgb[~pred & gt] = (255, 0, 0)
        rgb[pred & ~gt] = (0, 0, 255)
        paths.append(out / f"{stem}_errors.png")
        Image.fromarray(rgb, mode="RGB").save(paths[1])
    return paths


def attack_specs(n: int, seed: int) -> list[AttackSpec]:
    rng = np.random.default_rng(seed)
    return [AttackSpec.random(rng) for _ in range(n)]


def attack_eval(model, tiles: Sequence[TileSample], seed: int, threshold: float = THRESHOLD) -> Metrics:
    """Metrics after blanking a random image quadrant and a different trajectory quadrant per tile."""
    specs = attack_specs(len(tiles), seed)
    attacked = (apply_info_loss(t, s) for t, s in zip(tiles, specs))
    return metrics(evaluate_tiles(model, attacked, threshold))


@dataclass
class SweepRow:
    setting: str
    blur_factor: int
    noise_sigma_m: float
    iou: float
    f1: float
    mean_gate_image: float
    mean_gate_traj: float


def _sweep_point(model, tiles, blur, sigma, seed, threshold) -> SweepRow:
    total = ConfusionCounts()
    gi, gt = [], []
    for k, tile in enumerate(tiles):
        t = degrade(tile, blur, sigma, seed=seed + k)
        res = run_tile(model, t)
        total = total + confusion(res.road_prob[0].numpy() >= threshold, t.label > 0.5)
        gi.append(float(res.gates[-1].image.mean()))
        gt.append(float(res.gates[-1].traj.mean()))
    m = metrics(total)
    name = f"blur{blur}_noise{sigma:g}"
    return SweepRow(name, blur, float(sigma), m.iou, m.f1, float(np.mean(gi)), float(np.mean(gt)))


def quality_sweep(
    model,
    tiles: Sequence[TileSample],
    blur_factors: Sequence[int] = (1, 2, 4, 8),
    noise_sigmas: Sequence[float] = (0, 5, 10, 20),
    seed: int = 0,
    out_csv=None,
    threshold: float = THRESHOLD,
) -> list[SweepRow]:
    """Metrics and mean level-5 gates as image blur grows (no GPS noise), then
    as GPS noise grows (no blur)."""
    rows = [_sweep_point(model, tiles, b, 0.0, seed, threshold) for b in blur_factors]
    rows += [_sweep_point(model, tiles, 1, s, seed, threshold) for s in noise_sigmas]
    if out_csv is not None:
        with open(out_csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["setting", "blur_factor", "noise_sigma_m", "iou", "f1", "mean_gate_image", "mean_gate_traj"])
            for r in rows:
                w.writerow(list(asdict(r).values()))
    return rows
