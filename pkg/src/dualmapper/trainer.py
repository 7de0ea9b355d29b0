"""Dense-supervision loss, Adam training loop, logging and checkpointing."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import Tensor

from . import evalkit
from .checkpoint import load_checkpoint, restore_optimizer, save_checkpoint
from .geodata.sampling import TileSample
from .model import STREAMS, DualMapper
from .refiner import build_label_pyramid

log = logging.getLogger(__name__)

CE_EPS = 1e-7


@dataclass
class LossWeights:
    image: float = 0.5
    traj: float = 0.5
    fused: float = 0.5
    refined: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"loss weight {k} must be >= 0, got {v}")

    def of(self, stream: str) -> float:
        return getattr(self, stream)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    epochs: int = 50
    steps: int | None = None  # overrides epochs when set
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    threads: int = 1
    width: int = 16
    tile_size: int = 224

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.betas = tuple(self.betas)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown train settings: {sorted(unknown)}")
        return cls(**d)


def pixel_ce(p: Tensor, y: Tensor, eps: float = CE_EPS) -> Tensor:
    """Mean binary cross entropy of road probability ``p`` against soft label ``y``."""
    if p.shape != y.shape:
        raise ValueError(f"prediction {tuple(p.shape)} and label {tuple(y.shape)} differ")
    p = p.clamp(eps, 1.0 - eps)
    return -(y * torch.log(p) + (1.0 - y) * torch.log1p(-p)).mean()


@dataclass
class LossBreakdown:
    total: Tensor
    terms: dict[str, list[Tensor]] = field(default_factory=dict)

    def stream_sums(self) -> dict[str, float]:
        return {s: float(sum(t.item() for t in ts)) for s, ts in self.terms.items()}


def total_loss(preds: dict[str, list[Tensor]], pyramid: Sequence[Tensor], weights: LossWeights) -> LossBreakdown:
    """Weighted sum of the 20 per-level, per-stream cross entropies."""
    if len(pyramid) != 5:
        raise ValueError(f"label pyramid needs 5 levels, got {len(pyramid)}")
    terms, total = {}, None
    for s in STREAMS:
        if s not in preds or len(preds[s]) != 5:
            raise ValueError(f"predictions for stream {s!r} must cover 5 levels")
        terms[s] = [pixel_ce(p, y) for p, y in zip(preds[s], pyramid)]
        part = weights.of(s) * sum(terms[s])
        total = part if total is None else total + part
    return LossBreakdown(total, terms)


def tiles_to_tensors(tiles: Sequence[TileSample]) -> tuple[Tensor, Tensor, Tensor]:
    image = torch.from_numpy(np.stack([t.image for t in tiles]).astype(np.float32))
    traj = torch.from_numpy(np.stack([t.traj for t in tiles]).astype(np.float32)).unsqueeze(1)
    label = torch.from_numpy(np.stack([t.label for t in tiles]).astype(np.float32))
    return image, traj, label


class Trainer:
    """Owns the model, optimizer and step counter of one training run.

    ``sampler`` must provide ``batch(step, batch_size)`` and ``epoch_size()``;
    both are deterministic so a resumed run replays the same batches.
    """

    def __init__(
        self,
        config: TrainConfig,
        sampler,
        model: DualMapper | None = None,
        weights: LossWeights | None = None,
        out_dir=None,
        val_tiles: Sequence[TileSample] | None = None,
    ):
        self.config = config
        self.sampler = sampler
        self.weights = weights or LossWeights()
        torch.set_num_threads(config.threads)
        if model is None:
            torch.manual_seed(config.seed)
            model = DualMapper(width=config.width)
        self.model = model
        self.optimizer = torch.optim.Adam(
            model.parameters(), lr=config.learning_rate, betas=config.betas, eps=config.eps
        )
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.val_tiles = list(val_tiles or [])
        self.step = 0
        self.history: list[dict] = []
        self.val_history: list[dict] = []
        if self.out_dir is not None:
            (self.out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)

    @property
    def steps_per_epoch(self) -> int:
        return max(1, math.ceil(self.sampler.epoch_size() / self.config.batch_size))

    @property
    def total_steps(self) -> int:
        if self.config.steps is not None:
            return self.config.steps
        return self.config.epochs * self.steps_per_epoch

    @classmethod
    def resume(cls, checkpoint, config: TrainConfig, sampler, **kw) -> "Trainer":
        model, manifest = load_checkpoint(checkpoint)
        trainer = cls(config, sampler, model=model, **kw)
        restore_optimizer(checkpoint, model, trainer.optimizer)
        trainer.step = int(manifest["meta"].get("step", 0))
        return trainer

    def _log(self, record: dict) -> None:
        self.history.append(record)
        if self.out_dir is not None:
            with open(self.out_dir / "train_log.ndjson", "a", encoding="utf-8") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")

    def train_step(self) -> dict:
        tiles = self.sampler.batch(self.step, self.config.batch_size)
        image, traj, label = tiles_to_tensors(tiles)
        self.model.train()
        out = self.model(image, traj)
        loss = total_loss(out.preds, build_label_pyramid(label), self.weights)
        if not torch.isfinite(loss.total):
            self._dump(image, traj, label)
            raise FloatingPointError(f"non-finite loss at step {self.step}: {loss.total.item()}")
        self.optimizer.zero_grad(set_to_none=True)
        loss.total.backward()
        self.optimizer.step()
        record = {
            "step": self.step,
            "epoch": self.step // self.steps_per_epoch,
            "total_loss": loss.total.item(),
            "losses": loss.stream_sums(),
            "lr": self.optimizer.param_groups[0]["lr"],
        }
        self.step += 1
        self._log(record)
        return record

    def _dump(self, image, traj, label) -> None:
        if self.out_dir is None:
            return
        path = self.out_dir / f"nonfinite_step{self.step}.npz"
        np.savez(path, image=image.numpy(), traj=traj.numpy(), label=label.numpy())
        log.error("non-finite loss; offending batch written to %s", path)

    def validate(self) -> dict | None:
        if not self.val_tiles:
            return None
        counts = evalkit.evaluate_tiles(self.model, self.val_tiles)
        return evalkit.metrics(counts).to_dict()

    def save(self, name: str) -> Path | None:
        if self.out_dir is None:
            return None
        meta = {"step": self.step, "epoch": self.step // self.steps_per_epoch, "seed": self.config.seed}
        return save_checkpoint(self.out_dir / "checkpoints" / name, self.model, self.optimizer, meta)

    def run(self, steps: int | None = None) -> list[Path]:
        """Train up to ``steps`` more steps (default: to the configured end)."""
        end = self.total_steps if steps is None else self.step + steps
        saved = []
        while self.step < end:
            self.train_step()
            if self.step % self.steps_per_epoch == 0 or self.step == end:
                epoch = math.ceil(self.step / self.steps_per_epoch)
                val = self.validate()
                if val is not None:
                    self.val_history.append({"epoch": epoch, **val})
                    self._log({"step": self.step, "epoch": epoch, "val": val})
                path = self.save(f"epoch{epoch:03d}")
                if path is not None:
                    saved.append(path)
        if self.out_dir is not None and self.val_history:
            (self.out_dir / "val_summary.json").write_text(json.dumps(self.val_summary(), indent=2))
        return saved

    def val_summary(self, last: int = 10) -> dict:
        """Mean validation metrics over the last ``last`` epochs."""
        tail = self.val_history[-last:]
        keys = ("iou", "f1", "precision", "recall")
        return {"epochs": [r["epoch"] for r in tail], **{k: float(np.mean([r[k] for r in tail])) for k in keys}}


def train(config: TrainConfig, sampler, model: DualMapper | None = None, **kw) -> tuple[Trainer, list[Path]]:
    trainer = Trainer(config, sampler, model=model, **kw)
    return trainer, trainer.run()
