"""Manifest-backed (approximant, truth) pair loading."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch.utils.data import Dataset

from .formats import Manifest, ManifestEntry, load_manifest, read_array


class StackPairDataset(Dataset):
    """Pairs of float32 (L, H, W) tensors: network input and target.

    With ``input_offset`` each approximant is shifted by its own minimum so the
    network never sees negative inputs; the correlation loss is offset-blind,
    so this changes nothing about the target semantics.
    """

    def __init__(
        self,
        manifest: Manifest,
        split: str,
        input_offset: bool = False,
    ) -> None:
        self.entries = manifest.split(split)
        self.layer_shape = manifest.layer_shape
        self.input_offset = input_offset
        if split not in ("train", "validation", "test"):
            raise ValueError(f"unknown split {split!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def load_pair(self, entry: ManifestEntry) -> tuple[np.ndarray, np.ndarray]:
        approx = read_array(entry.approximant_path)
        truth = read_array(entry.truth_path)
        for name, arr in (("approximant", approx), ("truth", truth)):
            if arr.shape != self.layer_shape:
                raise ValueError(
                    f"{entry.example_id} {name}: shape {arr.shape} != "
                    f"manifest geometry {self.layer_shape}"
                )
        if self.input_offset:
            approx = approx - approx.min()
        return approx, truth

    def __getitem__(self, index: int) -> tuple[torch.Tensor, torch.Tensor]:
        approx, truth = self.load_pair(self.entries[index])
        return (
            torch.from_numpy(approx.astype(np.float32)),
            torch.from_numpy(truth.astype(np.float32)),
        )


def open_split(
    manifest_path: str | Path, split: str, input_offset: bool = False
) -> StackPairDataset:
    return StackPairDataset(load_manifest(manifest_path), split, input_offset)
