"""Command-line entry point: ``dualmapper <command> --config run.json``.

Every command reads one JSON pipeline config (see ``synth`` for a complete
example), applies flag overrides and writes its outputs under ``--out``.
Failures print a single JSON error record on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import evalkit
from .checkpoint import load_checkpoint
from .geodata import io as gio
from .geodata.projection import GeoRegion, project
from .geodata.raster import RasterSummary, rasterize_trajectories, render_ground_truth, scale_traj
from .geodata.sampling import Rect, RegionRasters, RegionSampler, SplitLayout, TileSample
from .trainer import LossWeights, TrainConfig, Trainer

log = logging.getLogger("dualmapper")

U64_MAX = 2**64 - 1


class UsageError(Exception):
    pass


@dataclass
class PipelineConfig:
    raw: dict
    base: Path
    seed: int
    region: GeoRegion
    split: SplitLayout

    def path(self, key: str) -> Path:
        try:
            rel = self.raw["paths"][key]
        except KeyError:
            raise ValueError(f"config has no paths.{key}") from None
        return (self.base / rel).resolve()

    def input_path(self, key: str) -> Path:
        p = self.path(key)
        if not p.exists():
            raise FileNotFoundError(f"paths.{key} points at missing file {p}")
        return p

    @property
    def traj_cap(self) -> int:
        return int(self.raw.get("traj_cap", 256))

    @property
    def road_width_px(self) -> float:
        return float(self.raw.get("road_width_px", 10))

    @property
    def width(self) -> int:
        return int(self.raw.get("model", {}).get("width", 16))

    def train_config(self, **overrides) -> TrainConfig:
        d = dict(self.raw.get("train", {}))
        d.setdefault("width", self.width)
        d.update({k: v for k, v in overrides.items() if v is not None})
        d["seed"] = self.seed
        return TrainConfig.from_dict(d)

    def loss_weights(self) -> LossWeights:
        return LossWeights(**self.raw.get("weights", {}))


def load_config(path, seed: int | None = None) -> PipelineConfig:
    if path is None:
        raise UsageError("--config is required for this command")
    path = Path(path)
    raw = json.loads(path.read_text())
    base = path.resolve().parent
    if seed is not None:
        raw["seed"] = seed
    if "seed" not in raw:
        raise ValueError("config must set a seed (or pass --seed)")
    region = GeoRegion.from_dict(raw["region"])
    split_spec = raw.get("split", {})
    if isinstance(split_spec, str):
        split_path = base / split_spec
        if not split_path.exists():
            raise FileNotFoundError(f"split layout {split_path} does not exist")
        split = SplitLayout.load(split_path)
    else:
        split = SplitLayout.from_dict({"width_px": region.width_px, "height_px": region.height_px, **split_spec})
    if (split.height_px, split.width_px) != region.shape:
        raise ValueError(f"split layout {split.height_px}x{split.width_px} does not match region {region.shape}")
    return PipelineConfig(raw, base, int(raw["seed"]), region, split)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- raster assembly -------------------------------------------------------


def _read_points(cfg: PipelineConfig, summary: RasterSummary | None = None):
    header = bool(cfg.raw["paths"].get("trajectories_header", False))
    return gio.read_trajectories(cfg.input_path("trajectories"), header=header, summary=summary)


def _rasterize(cfg: PipelineConfig):
    summary = RasterSummary()
    counts, summary = rasterize_trajectories(_read_points(cfg, summary), cfg.region, summary)
    return counts, summary


def _label(cfg: PipelineConfig, width_px: float | None = None):
    roads, skipped = gio.read_roads(cfg.input_path("roads"))
    return render_ground_truth(roads, cfg.region, width_px or cfg.road_width_px), len(roads), skipped


def _pixel_points(cfg: PipelineConfig) -> np.ndarray:
    pts = [(p.lat, p.lon) for p in _read_points(cfg)]
    if not pts:
        return np.zeros((0, 2))
    ll = np.asarray(pts, dtype=np.float64)
    rows, cols = project(ll[:, 0], ll[:, 1], cfg.region)
    return np.stack([rows, cols], axis=1)


def _cached(cfg: PipelineConfig, key: str):
    p = cfg.path(key) if key in cfg.raw.get("paths", {}) else None
    if p is not None and p.exists():
        values, _ = gio.read_ftz(p)
        if values.shape == cfg.region.shape:
            return values
    return None


def load_rasters(cfg: PipelineConfig, with_points: bool = False) -> RegionRasters:
    """Image, scaled trajectories and labels; derived rasters are recomputed when absent."""
    image, _ = gio.read_image(cfg.input_path("image"))
    if image.shape[1:] != cfg.region.shape:
        raise ValueError(f"image {image.shape[1:]} does not match region {cfg.region.shape}")
    counts = _cached(cfg, "traj_count")
    if counts is None:
        counts = _rasterize(cfg)[0].values
    traj = scale_traj(counts, cfg.traj_cap).values
    label = _cached(cfg, "label")
    if label is None:
        label = _label(cfg)[0].values
    points = _pixel_points(cfg) if with_points else None
    return RegionRasters(image, traj, label, points, cfg.traj_cap)


def _rects(cfg: PipelineConfig, split: str) -> list[Rect]:
    rects = getattr(cfg.split, split)
    if not rects:
        raise ValueError(f"split layout has no {split} rectangles")
    return rects


def _cell_tiles(rasters: RegionRasters, rects, cell: int = evalkit.CELL) -> list[TileSample]:
    tiles = []
    for r in rects:
        for y in range(r.y0, r.y0 + r.h - cell + 1, cell):
            for x in range(r.x0, r.x0 + r.w - cell + 1, cell):
                tiles.append(rasters.crop(y, x, cell))
    return tiles


def _model(checkpoint):
    if checkpoint is None:
        raise UsageError("--checkpoint is required for this command")
    model, _ = load_checkpoint(checkpoint)
    return model.eval()


# -- commands --------------------------------------------------------------


def cmd_synth(args) -> dict:
    from .synthetic import write_region

    out = Path(args.out)
    write_region(out, seed=args.seed if args.seed is not None else 0, size_px=(args.size, args.size))
    return {"config": str(out / "config.json")}


def cmd_rasterize(args) -> dict:
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    counts, summary = _rasterize(cfg)
    scaled = scale_traj(counts, cfg.traj_cap)
    gio.write_raster(out / "traj_count.ftz", counts)
    gio.write_raster(out / "traj_scaled.ftz", scaled)
    report = {**summary.to_dict(), "skipped": summary.malformed + summary.out_of_region, "errors": summary.errors}
    _write_json(out / "rasterize_summary.json", report)
    return report


def cmd_render_gt(args) -> dict:
    cfg = load_config(args.config, args.seed)
    grid, n, skipped = _label(cfg, args.width_px)
    gio.write_raster(Path(args.out) / "label.ftz", grid)
    return {"roads": n, "skipped": skipped, "road_pixels": int(grid.values.sum())}


def cmd_train(args) -> dict:
    cfg = load_config(args.config, args.seed)
    tc = cfg.train_config(steps=args.steps, epochs=args.epochs)
    rasters = load_rasters(cfg)
    sampler = RegionSampler(rasters, cfg.split, cfg.seed, tc.tile_size)
    val = _cell_tiles(rasters, cfg.split.val, tc.tile_size) if cfg.split.val else []
    out = Path(args.out)
    kw = dict(weights=cfg.loss_weights(), out_dir=out, val_tiles=val)
    if args.checkpoint:
        trainer = Trainer.resume(args.checkpoint, tc, sampler, **kw)
    else:
        trainer = Trainer(tc, sampler, **kw)
    saved = trainer.run()
    return {"steps": trainer.step, "checkpoints": [str(p) for p in saved]}


def _stitched(cfg, model, rasters, rect, return_prob=False):
    return evalkit.stitch_predict(model, rasters.image, rasters.traj, rect, return_prob=return_prob)


def cmd_eval(args) -> dict:
    cfg = load_config(args.config, args.seed)
    rasters = load_rasters(cfg)
    rects = _rects(cfg, args.split)
    counts = evalkit.ConfusionCounts()
    model = None if args.predictions else _model(args.checkpoint)
    for k, r in enumerate(rects):
        if model is None:
            prob, _ = gio.read_ftz(Path(args.predictions) / f"prediction_{k}.ftz")
            pred = prob >= evalkit.THRESHOLD
        else:
            pred = _stitched(cfg, model, rasters, r)
        gt = rasters.label[r.y0 : r.y1, r.x0 : r.x1] > 0.5
        counts = counts + evalkit.confusion(pred, gt)
    report = evalkit.metrics(counts).to_dict()
    _write_json(Path(args.out) / f"metrics_{args.split}.json", report)
    return report


def cmd_attack(args) -> dict:
    cfg = load_config(args.config, args.seed)
    model = _model(args.checkpoint)
    tiles = _cell_tiles(load_rasters(cfg), _rects(cfg, args.split))
    report = evalkit.attack_eval(model, tiles, cfg.seed).to_dict()
    _write_json(Path(args.out) / "attack.json", report)
    return report


def cmd_sweep(args) -> dict:
    cfg = load_config(args.config, args.seed)
    model = _model(args.checkpoint)
    tiles = _cell_tiles(load_rasters(cfg, with_points=True), _rects(cfg, args.split))
    sweep = cfg.raw.get("sweep", {})
    rows = evalkit.quality_sweep(
        model,
        tiles,
        blur_factors=sweep.get("blur_factors", (1, 2, 4, 8)),
        noise_sigmas=[s / cfg.region.resolution for s in sweep.get("noise_sigmas_m", (0, 5, 10, 20))],
        seed=cfg.seed,
        out_csv=Path(args.out) / "sweep.csv",
    )
    return {"rows": len(rows), "csv": str(Path(args.out) / "sweep.csv")}


def cmd_gates(args) -> dict:
    cfg = load_config(args.config, args.seed)
    model = _model(args.checkpoint)
    rasters = load_rasters(cfg)
    rect = _rects(cfg, args.split)[0]
    row = rect.y0 if args.row is None else args.row
    col = rect.x0 if args.col is None else args.col
    tile = rasters.crop(row, col, evalkit.CELL)
    out = Path(args.out) / "gates"
    paths = evalkit.export_gates(model, tile, out)
    paths += evalkit.export_predictions(model, tile, out)
    return {"files": len(paths), "dir": str(out)}


def cmd_predict(args) -> dict:
    cfg = load_config(args.config, args.seed)
    model = _model(args.checkpoint)
    rasters = load_rasters(cfg)
    out = Path(args.out)
    shapes = []
    for k, r in enumerate(_rects(cfg, args.split)):
        prob = _stitched(cfg, model, rasters, r, return_prob=True)
        gio.write_ftz(out / f"prediction_{k}.ftz", prob, "image")
        gt = rasters.label[r.y0 : r.y1, r.x0 : r.x1]
        evalkit.write_prediction_pngs(prob >= evalkit.THRESHOLD, gt > 0.5, out, stem=f"prediction_{k}")
        shapes.append(list(prob.shape))
    return {"maps": shapes}


COMMANDS = {
    "synth": (cmd_synth, "write a synthetic region and its config"),
    "rasterize": (cmd_rasterize, "count GPS fixes per pixel"),
    "render-gt": (cmd_render_gt, "draw the road label raster"),
    "train": (cmd_train, "train a model on the training split"),
    "eval": (cmd_eval, "stitched metrics on a split"),
    "attack": (cmd_attack, "metrics after quadrant information loss"),
    "sweep": (cmd_sweep, "metrics and gates under image blur and GPS noise"),
    "gates": (cmd_gates, "export gate and prediction maps for one tile"),
    "predict": (cmd_predict, "predicted road maps for a split"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = _Parser(add_help=False)
    common.add_argument("--config", default=None, help="pipeline config JSON")
    common.add_argument("--seed", type=_seed, default=None, help="overrides the config seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=False, help="debug logging")

    parser = _Parser(prog="dualmapper", description=__doc__.splitlines()[0], formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}
    for name, (_, help_text) in COMMANDS.items():
        subs[name] = sub.add_parser(name, parents=[common], help=help_text, description=help_text, formatter_class=fmt)

    subs["synth"].add_argument("--size", type=int, default=896, help="region side in pixels")
    subs["render-gt"].add_argument("--width-px", type=float, default=None, help="band width; config road_width_px if unset")
    subs["train"].add_argument("--steps", type=int, default=None, help="stop after this many steps in total")
    subs["train"].add_argument("--epochs", type=int, default=None, help="override train.epochs")
    subs["train"].add_argument("--checkpoint", default=None, help="resume from this checkpoint manifest")
    for name in ("eval", "attack", "sweep", "gates", "predict"):
        p = subs[name]
        p.add_argument("--checkpoint", default=None, help="checkpoint manifest (.json)")
        p.add_argument("--split", choices=("test", "val"), default="test", help="which rectangles to use")
    subs["eval"].add_argument("--predictions", default=None, help="score prediction_<k>.ftz maps from this directory instead of a model")
    subs["gates"].add_argument("--row", type=int, default=None, help="tile top row; first rectangle if unset")
    subs["gates"].add_argument("--col", type=int, default=None, help="tile left column; first rectangle if unset")
    return parser


def _error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        _error("usage", str(e))
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(1)
    try:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command][0](args)
    except UsageError as e:
        _error("usage", str(e))
        return 2
    except Exception as e:  # noqa: BLE001 - every failure becomes a JSON record
        log.debug("command failed", exc_info=True)
        _error(type(e).__name__, str(e))
        return 1
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
