"""Per-modality U-Net branches with channel widths reduced fourfold.

Layer names follow the usual U-Net table (``conv1-1`` ... ``conv5-2`` in the
encoder, ``deconv4-1``/``conv4-3``/``conv4-4`` ... in the decoder). With the
default ``width=16`` a 224x224 input yields the pyramid::

    level 1: 14x14x256   (bottleneck, conv5-2)
    level 2: 28x28x128
    level 3: 56x56x64
    level 4: 112x112x32
    level 5: 224x224x16
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import Tensor, nn

LEVELS = 5


def level_channels(level: int, width: int = 16) -> int:
    """Channel count of pyramid level ``level`` (1 = coarsest)."""
    if not 1 <= level <= LEVELS:
        raise ValueError(f"level must be in 1..{LEVELS}, got {level}")
    return width * 2 ** (LEVELS - level)


def level_shape(level: int, height: int, width_px: int, width: int = 16) -> tuple[int, int, int]:
    s = 2 ** (LEVELS - level)
    return (height // s, width_px // s, level_channels(level, width))


class ConvBNReLU(nn.Sequential):
    def __init__(self, cin: int, cout: int):
        super().__init__(
            nn.Conv2d(cin, cout, 3, padding=1),
            nn.BatchNorm2d(cout, momentum=0.1),
            nn.ReLU(),
        )

    @property
    def conv(self) -> nn.Conv2d:
        return self[0]

    @property
    def bn(self) -> nn.BatchNorm2d:
        return self[1]


def init_weights(module: nn.Module) -> None:
    """Fan-in scaled uniform init for (de)convolutions, unit scale / zero shift for BN.

    Weights and biases are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)), i.e.
    Kaiming-uniform with a = sqrt(5). Under batch norm the weight scale only
    sets Adam's relative step size; the gain-sqrt(2) normal variant trains
    about 2.5x slower at the same learning rate.
    """
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.kaiming_uniform_(m.weight, a=math.sqrt(5))
            if m.bias is not None:
                bound = 1.0 / math.sqrt(m.weight[0].numel())
                nn.init.uniform_(m.bias, -bound, bound)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


@dataclass
class EncoderFeatures:
    skips: list[Tensor]  # conv1-2, conv2-2, conv3-2, conv4-2
    bottleneck: Tensor  # conv5-2


class Branch(nn.Module):
    """Encoder plus auxiliary decoder for one input modality."""

    def __init__(self, in_channels: int, width: int = 16):
        super().__init__()
        self.in_channels = in_channels
        self.width = width
        enc, dec = {}, {}
        cin = in_channels
        for k in range(1, 6):
            c = width * 2 ** (k - 1)
            enc[f"conv{k}-1"] = ConvBNReLU(cin, c)
            enc[f"conv{k}-2"] = ConvBNReLU(c, c)
            cin = c
        for k in range(4, 0, -1):
            c = width * 2 ** (k - 1)
            dec[f"deconv{k}-1"] = nn.ConvTranspose2d(2 * c, c, kernel_size=2, stride=2)
            dec[f"conv{k}-3"] = ConvBNReLU(2 * c, c)
            dec[f"conv{k}-4"] = ConvBNReLU(c, c)
        self.encoder = nn.ModuleDict(enc)
        self.decoder = nn.ModuleDict(dec)
        self.pool = nn.MaxPool2d(2, 2)
        init_weights(self)

    def _check_input(self, x: Tensor) -> None:
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"expected (N, {self.in_channels}, H, W) input, got {tuple(x.shape)}")
        if x.shape[2] % 16 or x.shape[3] % 16:
            raise ValueError(f"input height and width must be divisible by 16, got {tuple(x.shape[2:])}")

    def encode(self, x: Tensor) -> EncoderFeatures:
        self._check_input(x)
        skips = []
        for k in range(1, 6):
            x = self.encoder[f"conv{k}-1"](x)
            x = self.encoder[f"conv{k}-2"](x)
            if k < 5:
                skips.append(x)
                x = self.pool(x)
        return EncoderFeatures(skips=skips, bottleneck=x)

    def aux_decode(self, enc: EncoderFeatures) -> list[Tensor]:
        """Return ``[F1, ..., F5]``: the bottleneck then each decoder block output."""
        feats = [enc.bottleneck]
        x = enc.bottleneck
        for k in range(4, 0, -1):
            skip = enc.skips[k - 1]
            x = self.decoder[f"deconv{k}-1"](x)
            if x.shape != skip.shape:
                raise ValueError(f"decoder level {k}: {tuple(x.shape)} vs skip {tuple(skip.shape)}")
            x = torch.cat([x, skip], dim=1)
            x = self.decoder[f"conv{k}-3"](x)
            x = self.decoder[f"conv{k}-4"](x)
            feats.append(x)
        return feats

    def forward(self, x: Tensor) -> list[Tensor]:
        return self.aux_decode(self.encode(x))
