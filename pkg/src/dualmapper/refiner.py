"""Residual refinement decoder, shared per-level predictors and soft labels."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .backbone import LEVELS, ConvBNReLU


class RefineBlock(nn.Module):
    """``A_r = A_f + CBR2(deconv(A_r_prev) ++ A_f)``."""

    def __init__(self, prev_channels: int, channels: int):
        super().__init__()
        self.deconv = nn.ConvTranspose2d(prev_channels, channels, kernel_size=2, stride=2)
        self.cbr1 = ConvBNReLU(2 * channels, channels)
        self.cbr2 = ConvBNReLU(channels, channels)

    def residual(self, fused: Tensor, prev: Tensor) -> Tensor:
        up = self.deconv(prev)
        if up.shape != fused.shape:
            raise ValueError(f"upsampled refined features {tuple(up.shape)} vs fused {tuple(fused.shape)}")
        return self.cbr2(self.cbr1(torch.cat([up, fused], dim=1)))

    def forward(self, fused: Tensor, prev: Tensor) -> Tensor:
        return fused + self.residual(fused, prev)

    @torch.no_grad()
    def zero_residual_(self) -> None:
        # BN affine is zeroed too, otherwise eval-mode running stats leak a constant.
        nn.init.zeros_(self.cbr2.conv.weight)
        nn.init.zeros_(self.cbr2.conv.bias)
        nn.init.zeros_(self.cbr2.bn.weight)
        nn.init.zeros_(self.cbr2.bn.bias)


class Predictor(nn.Module):
    """1x1 convolution to two classes followed by softmax."""

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.fc = nn.Conv2d(channels, 2, 1)

    def reset_parameters(self) -> None:
        """Zero weights and bias: every pixel starts at p = 0.5 for both classes."""
        nn.init.zeros_(self.fc.weight)
        nn.init.zeros_(self.fc.bias)

    def class_probs(self, a: Tensor) -> Tensor:
        if a.dim() != 4 or a.shape[1] != self.channels:
            raise ValueError(f"expected {self.channels}-channel features, got {tuple(a.shape)}")
        return torch.softmax(self.fc(a), dim=1)

    def forward(self, a: Tensor) -> Tensor:
        """Road probability map of shape (N, h, w)."""
        return self.class_probs(a)[:, 1]


def build_label_pyramid(label):
    """Average-pool the label 2x2 four times; returns ``[y1, ..., y5]``.

    Accepts a numpy ``(H, W)`` array or a tensor ``(N, H, W)``.
    """
    if isinstance(label, np.ndarray):
        h, w = label.shape
        if h % 16 or w % 16:
            raise ValueError(f"label {h}x{w} must be divisible by 16")
        out = [label.astype(np.float32)]
        for _ in range(LEVELS - 1):
            y = out[-1]
            hh, ww = y.shape
            out.append(y.reshape(hh // 2, 2, ww // 2, 2).mean(axis=(1, 3), dtype=np.float64).astype(np.float32))
        return out[::-1]
    if label.dim() != 3 or label.shape[1] % 16 or label.shape[2] % 16:
        raise ValueError(f"label must be (N, H, W) with H, W divisible by 16, got {tuple(label.shape)}")
    y = label.unsqueeze(1).float()
    out = [y]
    for _ in range(LEVELS - 1):
        out.append(F.avg_pool2d(out[-1], 2))
    return [t.squeeze(1) for t in out[::-1]]
