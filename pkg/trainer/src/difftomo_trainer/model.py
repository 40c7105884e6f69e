"""DenseNet encoder-decoder mapping approximant stacks to phase stacks.

Each sample layer is one image channel, so the network maps L channels to L
channels at full resolution.  The published description fixes the family
(dense blocks, 3 per side) and the final rectifier; internal widths are not
published, so growth rate, layers per block, and stem width are configurable
defaults documented in ``TrainConfig``.
"""

from __future__ import annotations

import torch
from torch import nn

from .config import TrainConfig


class _DenseLayer(nn.Module):
    """Pre-activation composite: BN -> ReLU -> 3x3 conv, output concatenated."""

    def __init__(self, in_channels: int, growth_rate: int) -> None:
        super().__init__()
        self.norm = nn.BatchNorm2d(in_channels)
        self.conv = nn.Conv2d(in_channels, growth_rate, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.cat([x, self.conv(torch.relu(self.norm(x)))], dim=1)


class _DenseBlock(nn.Sequential):
    def __init__(self, in_channels: int, growth_rate: int, n_layers: int) -> None:
        layers = []
        ch = in_channels
        for _ in range(n_layers):
            layers.append(_DenseLayer(ch, growth_rate))
            ch += growth_rate
        super().__init__(*layers)
        self.out_channels = ch


class _TransitionDown(nn.Module):
    """1x1 compression followed by 2x2 average pooling."""

    def __init__(self, in_channels: int) -> None:
        super().__init__()
        self.out_channels = in_channels // 2
        self.conv = nn.Conv2d(in_channels, self.out_channels, kernel_size=1)
        self.pool = nn.AvgPool2d(2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.pool(self.conv(x))


class _TransitionUp(nn.Module):
    """2x stride transposed convolution restoring the skip resolution."""

    def __init__(self, in_channels: int, out_channels: int) -> None:
        super().__init__()
        self.conv = nn.ConvTranspose2d(in_channels, out_channels, kernel_size=2, stride=2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv(x)


class DenseEncoderDecoder(nn.Module):
    """Symmetric encoder-decoder with skip connections and a rectified head."""

    def __init__(self, n_channels: int, cfg: TrainConfig) -> None:
        super().__init__()
        self.n_channels = n_channels
        self.n_scales = cfg.dense_blocks
        g, l = cfg.growth_rate, cfg.block_layers
        fuse = cfg.base_channels + cfg.growth_rate  # decoder working width

        self.stem = nn.Conv2d(n_channels, cfg.base_channels, kernel_size=3, padding=1)

        self.enc_blocks = nn.ModuleList()
        self.downs = nn.ModuleList()
        skip_channels = []
        ch = cfg.base_channels
        for _ in range(self.n_scales):
            block = _DenseBlock(ch, g, l)
            self.enc_blocks.append(block)
            skip_channels.append(block.out_channels)
            down = _TransitionDown(block.out_channels)
            self.downs.append(down)
            ch = down.out_channels

        self.bottleneck = _DenseBlock(ch, g, l)
        ch = self.bottleneck.out_channels

        self.ups = nn.ModuleList()
        self.fuses = nn.ModuleList()
        self.dec_blocks = nn.ModuleList()
        for skip_ch in reversed(skip_channels):
            self.ups.append(_TransitionUp(ch, fuse))
            self.fuses.append(nn.Conv2d(fuse + skip_ch, fuse, kernel_size=1))
            block = _DenseBlock(fuse, g, l)
            self.dec_blocks.append(block)
            ch = block.out_channels

        self.head = nn.Conv2d(ch, n_channels, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.n_channels:
            raise ValueError(
                f"expected (N, {self.n_channels}, H, W) input, got {tuple(x.shape)}"
            )
        factor = 2**self.n_scales
        if x.shape[2] % factor or x.shape[3] % factor:
            raise ValueError(
                f"spatial size {tuple(x.shape[2:])} must be divisible by {factor}"
            )
        x = self.stem(x)
        skips = []
        for block, down in zip(self.enc_blocks, self.downs):
            x = block(x)
            skips.append(x)
            x = down(x)
        x = self.bottleneck(x)
        for up, fuse, block, skip in zip(
            self.ups, self.fuses, self.dec_blocks, reversed(skips)
        ):
            x = up(x)
            x = fuse(torch.cat([x, skip], dim=1))
            x = block(x)
        return torch.relu(self.head(x))


def build_model(cfg: TrainConfig, n_channels: int) -> DenseEncoderDecoder:
    """Construct the network for an ``n_channels``-layer dataset."""
    if n_channels < 1:
        raise ValueError(f"n_channels must be >= 1, got {n_channels}")
    return DenseEncoderDecoder(n_channels, cfg)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
