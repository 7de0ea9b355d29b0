"""Gated fusion of image and trajectory features at one pyramid level.

Per level the module adapts both feature maps with 1x1 convolutions, computes
a residual gate update from their concatenation, accumulates gate logits from
the coarser level (nearest-neighbour 2x upsampling) and mixes the adapted maps
with complementary per-pixel softmax weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .backbone import ConvBNReLU

GATE_SUM_TOL = 1e-4


@dataclass
class GateState:
    logits: Tensor  # (N, 2, h, w); channel 0 image, channel 1 trajectory
    image: Tensor  # (N, h, w)
    traj: Tensor  # (N, h, w)


@dataclass
class FusionOutput:
    adapted_image: Tensor
    adapted_traj: Tensor
    fused: Tensor
    gates: GateState


def update_gates(prev: Tensor | None, delta: Tensor) -> Tensor:
    """Add ``delta`` to the 2x nearest-neighbour upsampled previous logits.

    ``prev=None`` stands for the all-zero prior at the coarsest level.
    """
    if prev is None:
        return delta
    up = F.interpolate(prev, scale_factor=2, mode="nearest")
    if up.shape != delta.shape:
        raise ValueError(f"upsampled gate logits {tuple(up.shape)} do not match delta {tuple(delta.shape)}")
    return up + delta


def normalize_gates(logits: Tensor) -> tuple[Tensor, Tensor]:
    """Two-way softmax over the channel axis, max-shifted for stability."""
    if logits.shape[1] != 2:
        raise ValueError(f"gate logits need 2 channels, got {logits.shape[1]}")
    shifted = logits - logits.max(dim=1, keepdim=True).values.detach()
    e = torch.exp(shifted)
    g = e / e.sum(dim=1, keepdim=True)
    return g[:, 0], g[:, 1]


def fuse(a_image: Tensor, a_traj: Tensor, g_image: Tensor, g_traj: Tensor) -> Tensor:
    """``G_I * A_I + G_T * A_T`` with one gate value per pixel for all channels."""
    if a_image.shape != a_traj.shape:
        raise ValueError(f"adapted shapes differ: {tuple(a_image.shape)} vs {tuple(a_traj.shape)}")
    if g_image.shape != a_image.shape[:1] + a_image.shape[2:] or g_traj.shape != g_image.shape:
        raise ValueError("gate maps must be (N, h, w) matching the features")
    dev = (g_image + g_traj - 1.0).abs().max() if g_image.numel() else 0.0
    if dev > GATE_SUM_TOL:
        raise ValueError(f"gates are not complementary (max deviation {float(dev):.3g})")
    return g_image.unsqueeze(1) * a_image + g_traj.unsqueeze(1) * a_traj


class GatedFusion(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.adapt_image = nn.Conv2d(channels, channels, 1)
        self.adapt_traj = nn.Conv2d(channels, channels, 1)
        self.selector = nn.Sequential(
            ConvBNReLU(2 * channels, 2 * channels),
            ConvBNReLU(2 * channels, 2 * channels),
        )
        self.psi = nn.Conv2d(2 * channels, 2, 1)

    def adapt(self, f_image: Tensor, f_traj: Tensor) -> tuple[Tensor, Tensor]:
        for f in (f_image, f_traj):
            if f.dim() != 4 or f.shape[1] != self.channels:
                raise ValueError(f"expected {self.channels}-channel features, got {tuple(f.shape)}")
        return self.adapt_image(f_image), self.adapt_traj(f_traj)

    def gate_delta(self, a_image: Tensor, a_traj: Tensor) -> Tensor:
        return self.psi(self.selector(torch.cat([a_image, a_traj], dim=1)))

    def forward(self, f_image: Tensor, f_traj: Tensor, prev_logits: Tensor | None = None) -> FusionOutput:
        a_i, a_t = self.adapt(f_image, f_traj)
        logits = update_gates(prev_logits, self.gate_delta(a_i, a_t))
        g_i, g_t = normalize_gates(logits)
        return FusionOutput(a_i, a_t, fuse(a_i, a_t, g_i, g_t), GateState(logits, g_i, g_t))
