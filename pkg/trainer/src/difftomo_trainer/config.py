"""Training configuration with the published defaults."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for dataset, model, and optimization.

    Defaults follow the reference protocol: 20 epochs at batch size 16 with
    3 dense blocks on each side of the encoder-decoder.  The learning rate
    and optimizer are unpublished; an adaptive-moment optimizer at 1e-3 is
    the documented default.  ``input_offset`` shifts each approximant to
    nonnegative values before it enters the network.
    """

    manifest: str | Path = "dataset/manifest.json"
    epochs: int = 20
    batch_size: int = 16
    dense_blocks: int = 3
    growth_rate: int = 12
    block_layers: int = 4
    base_channels: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    input_offset: bool = False
    out_dir: str | Path = "runs/default"

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.dense_blocks < 1:
            raise ValueError(f"dense_blocks must be >= 1, got {self.dense_blocks}")
        if self.growth_rate < 1 or self.block_layers < 1 or self.base_channels < 1:
            raise ValueError("growth_rate, block_layers, base_channels must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
