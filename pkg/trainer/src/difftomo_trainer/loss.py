"""Negative Pearson correlation loss.

The correlation is computed per example-channel pair over its pixels, then
averaged over the batch and channels; correlation pooling across examples is
deliberately avoided so every layer of every example contributes equally.
"""

from __future__ import annotations

import torch

_EPS = 1e-8


def pcc(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-(example, channel) Pearson correlation of (N, C, H, W) tensors."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    n, c = a.shape[0], a.shape[1]
    af = a.reshape(n, c, -1)
    bf = b.reshape(n, c, -1)
    ad = af - af.mean(dim=2, keepdim=True)
    bd = bf - bf.mean(dim=2, keepdim=True)
    num = (ad * bd).sum(dim=2)
    den = torch.sqrt((ad * ad).sum(dim=2) * (bd * bd).sum(dim=2))
    return num / (den + _EPS)


def npcc_loss(output: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean negative correlation over all (example, channel) pairs."""
    return -pcc(output, target).mean()
