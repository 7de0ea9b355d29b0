"""The assembled two-branch fusion network."""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import Tensor, nn

from .backbone import LEVELS, Branch, init_weights, level_channels
from .fusion import GatedFusion, GateState
from .refiner import Predictor, RefineBlock

STREAMS = ("image", "traj", "fused", "refined")


@dataclass
class ModelOutput:
    """Everything one forward pass produces.

    ``preds[stream][i]`` is the road probability of pyramid level ``i + 1``.
    """

    preds: dict[str, list[Tensor]]
    gates: list[GateState]
    refined: Tensor
    features: dict[str, list[Tensor]] = field(default_factory=dict)

    @property
    def road_prob(self) -> Tensor:
        return self.preds["refined"][-1]


class DualMapper(nn.Module):
    def __init__(self, width: int = 16):
        super().__init__()
        self.width = width
        self.image_branch = Branch(3, width)
        self.traj_branch = Branch(1, width)
        self.gfm = nn.ModuleList(GatedFusion(level_channels(i, width)) for i in range(1, LEVELS + 1))
        self.refine = nn.ModuleList(
            RefineBlock(level_channels(i - 1, width), level_channels(i, width)) for i in range(2, LEVELS + 1)
        )
        self.predictors = nn.ModuleList(Predictor(level_channels(i, width)) for i in range(1, LEVELS + 1))
        init_weights(self)
        # a random predictor offset can start every pixel on the road side, which costs
        # hundreds of steps to undo; start neutral instead
        for p in self.predictors:
            p.reset_parameters()

    def forward(self, image: Tensor, traj: Tensor, keep_features: bool = False) -> ModelOutput:
        if traj.dim() == 3:
            traj = traj.unsqueeze(1)
        if image.shape[2:] != traj.shape[2:] or image.shape[0] != traj.shape[0]:
            raise ValueError(f"image {tuple(image.shape)} and trajectory {tuple(traj.shape)} disagree")
        f_image = self.image_branch(image)
        f_traj = self.traj_branch(traj)

        preds = {s: [] for s in STREAMS}
        feats = {s: [] for s in STREAMS}
        gates = []
        logits = None
        refined = None
        for i in range(LEVELS):
            out = self.gfm[i](f_image[i], f_traj[i], logits)
            logits = out.gates.logits
            gates.append(out.gates)
            refined = out.fused if i == 0 else self.refine[i - 1](out.fused, refined)
            predict = self.predictors[i]
            for s, a in zip(STREAMS, (out.adapted_image, out.adapted_traj, out.fused, refined)):
                preds[s].append(predict(a))
                if keep_features:
                    feats[s].append(a)
        return ModelOutput(preds=preds, gates=gates, refined=refined, features=feats)

    def zero_residuals_(self) -> None:
        for block in self.refine:
            block.zero_residual_()

    @torch.no_grad()
    def predict(self, image: Tensor, traj: Tensor) -> Tensor:
        """Eval-mode road probability at full resolution; restores the prior mode."""
        was_training = self.training
        self.eval()
        try:
            return self(image, traj).road_prob
        finally:
            self.train(was_training)
