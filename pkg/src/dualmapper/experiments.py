"""Small synthetic training experiments used as end-to-end checks.

``overfit`` trains on a handful of fixed tiles and reports train IoU.
``complementarity`` trains on tiles whose image is blanked in one half and
trajectories in the other, then measures where the trajectory gate opens.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from . import evalkit
from .geodata.sampling import FixedTileSampler, TileSample
from .synthetic import half_blank, make_tiles
from .trainer import TrainConfig, Trainer


@dataclass
class OverfitResult:
    steps: int
    iou: float
    history: list[tuple[int, float]] = field(default_factory=list)


def overfit_tiles(n: int = 8, size: int = 224, seed: int = 0) -> list[TileSample]:
    """Road bands on textured ground, GPS fixes scattered along every road."""
    return make_tiles(n, size, seed=seed, cap=32, occlusions=0, gps_sigma_px=1.5, traffic_prob=1.0)


def overfit(
    tiles: list[TileSample],
    steps: int = 500,
    batch_size: int = 4,
    learning_rate: float = 1e-4,
    width: int = 4,
    seed: int = 0,
    target: float | None = None,
    check_every: int = 50,
) -> OverfitResult:
    """Train on ``tiles`` and return the eval-mode IoU on those same tiles.

    With ``target`` set, training stops at the first check that reaches it.
    """
    cfg = TrainConfig(learning_rate=learning_rate, batch_size=batch_size, steps=steps, width=width, seed=seed,
                      tile_size=tiles[0].shape[0])
    trainer = Trainer(cfg, FixedTileSampler(tiles, seed))
    history = []
    iou = 0.0
    while trainer.step < steps:
        trainer.run(min(check_every, steps - trainer.step))
        iou = evalkit.metrics(evalkit.evaluate_tiles(trainer.model, tiles)).iou
        history.append((trainer.step, iou))
        if target is not None and iou >= target:
            break
    return OverfitResult(trainer.step, iou, history)


class HalfBlankSampler:
    """Fixed tiles with a fresh half-image / half-trajectory blanking per draw."""

    def __init__(self, tiles: list[TileSample], seed: int):
        self.tiles = tiles
        self.seed = seed

    def epoch_size(self) -> int:
        return len(self.tiles)

    def batch(self, step: int, batch_size: int) -> list[TileSample]:
        out = []
        for k in range(step * batch_size, (step + 1) * batch_size):
            rng = np.random.default_rng([self.seed, k])
            out.append(half_blank(self.tiles[int(rng.integers(len(self.tiles)))], rng)[0])
        return out


@dataclass
class GateContrast:
    seed: int
    gate_traj_image_blanked: float
    gate_traj_traj_blanked: float

    @property
    def holds(self) -> bool:
        return self.gate_traj_image_blanked > self.gate_traj_traj_blanked


def complementarity(
    seed: int,
    n_tiles: int = 16,
    size: int = 64,
    steps: int = 400,
    batch_size: int = 4,
    learning_rate: float = 1e-4,
    width: int = 4,
    n_eval: int = 16,
) -> GateContrast:
    """Mean level-5 trajectory gate over image-blanked vs trajectory-blanked pixels."""
    scene = dict(n_roads=(1, 3), gps_sigma_px=1.5)
    train_tiles = make_tiles(n_tiles, size, seed=2 * seed, cap=32, **scene)
    cfg = TrainConfig(learning_rate=learning_rate, batch_size=batch_size, steps=steps, width=width, seed=seed,
                      tile_size=size)
    trainer = Trainer(cfg, HalfBlankSampler(train_tiles, seed))
    trainer.run()

    rng = np.random.default_rng([seed, 1])
    on_img, on_traj = [], []
    for tile in make_tiles(n_eval, size, seed=2 * seed + 1, cap=32, **scene):
        blanked, img_mask, traj_mask = half_blank(tile, rng)
        g_t = evalkit.run_tile(trainer.model, blanked).gates[-1].traj[0].numpy()
        on_img.append(g_t[img_mask])
        on_traj.append(g_t[traj_mask])
    return GateContrast(seed, float(np.concatenate(on_img).mean()), float(np.concatenate(on_traj).mean()))


def _main() -> None:
    torch.set_num_threads(1)
    print(overfit(overfit_tiles(), target=0.95))
    for s in range(5):
        print(complementarity(s))


if __name__ == "__main__":
    _main()
