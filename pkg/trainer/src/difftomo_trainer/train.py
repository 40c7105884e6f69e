"""Training loop: NPCC minimization with per-epoch logging and checkpoints."""

from __future__ import annotations

import csv
import json
import math
import pickle
import zipfile
from dataclasses import dataclass
from pathlib import Path

import torch
from torch.utils.data import DataLoader

from .config import TrainConfig
from .dataset import StackPairDataset, open_split
from .loss import npcc_loss
from .model import DenseEncoderDecoder, build_model, parameter_count


class TrainingDivergedError(RuntimeError):
    """The loss became non-finite; the last finite-epoch checkpoint is kept."""


@dataclass
class EpochRecord:
    epoch: int
    train_npcc: float
    val_npcc: float | None


def _refresh_norm_stats(model: DenseEncoderDecoder, loader: DataLoader) -> None:
    """Recompute batch-norm running statistics under the current weights.

    With only a few optimizer steps per epoch the exponential running
    estimates lag far behind the weights they are paired with, which wrecks
    eval-mode inference on small datasets.  One forward sweep with cumulative
    averaging replaces them with the exact training-set statistics.
    """
    torch.optim.swa_utils.update_bn(loader, model)


def _state_finite(model: DenseEncoderDecoder) -> bool:
    """Whether every parameter and buffer is finite (checkpoint-worthy)."""
    return all(bool(torch.isfinite(t).all()) for t in model.state_dict().values())


def _epoch_pass(
    model: DenseEncoderDecoder,
    loader: DataLoader,
    optimizer: torch.optim.Optimizer | None,
) -> float:
    """One pass over the loader; returns the mean batch NPCC."""
    training = optimizer is not None
    model.train(training)
    total, batches = 0.0, 0
    with torch.set_grad_enabled(training):
        for inputs, targets in loader:
            outputs = model(inputs)
            loss = npcc_loss(outputs, targets)
            if training:
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            total += float(loss.detach())
            batches += 1
    if batches == 0:
        raise ValueError("empty split: nothing to iterate")
    return total / batches


def train(cfg: TrainConfig) -> tuple[DenseEncoderDecoder, list[EpochRecord]]:
    """Train on the manifest's train split, validating when a split exists.

    Writes ``checkpoint.pt``, ``loss.csv``, and ``train_meta.json`` into
    ``cfg.out_dir``.  Deterministic for a fixed seed on a fixed dataset.
    """
    torch.manual_seed(cfg.seed)
    train_set = open_split(cfg.manifest, "train", cfg.input_offset)
    val_set = open_split(cfg.manifest, "validation", cfg.input_offset)
    if len(train_set) == 0:
        raise ValueError(f"{cfg.manifest}: train split is empty")

    generator = torch.Generator().manual_seed(cfg.seed)
    train_loader = DataLoader(
        train_set, batch_size=cfg.batch_size, shuffle=True, generator=generator
    )
    refresh_loader = DataLoader(train_set, batch_size=cfg.batch_size)
    val_loader = (
        DataLoader(val_set, batch_size=cfg.batch_size) if len(val_set) else None
    )

    n_channels = train_set.layer_shape[0]
    model = build_model(cfg, n_channels)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "checkpoint.pt"

    history: list[EpochRecord] = []

    def _abort(epoch: int, what: str) -> None:
        _write_logs(out_dir, cfg, model, history, diverged_at=epoch)
        kept = (
            f"kept checkpoint of epoch {epoch - 1}"
            if epoch > 0
            else "no finished epoch to checkpoint"
        )
        raise TrainingDivergedError(f"{what} at epoch {epoch}; {kept}")

    for epoch in range(cfg.epochs):
        train_npcc = _epoch_pass(model, train_loader, optimizer)
        if not math.isfinite(train_npcc):
            _abort(epoch, "non-finite training loss")
        _refresh_norm_stats(model, refresh_loader)
        if not _state_finite(model):
            _abort(epoch, "non-finite model state")
        val_npcc = _epoch_pass(model, val_loader, None) if val_loader else None
        history.append(EpochRecord(epoch, train_npcc, val_npcc))
        torch.save(
            {"model": model.state_dict(), "n_channels": n_channels, "epoch": epoch},
            ckpt_path,
        )
    _write_logs(out_dir, cfg, model, history, diverged_at=None)
    return model, history


def _write_logs(
    out_dir: Path,
    cfg: TrainConfig,
    model: DenseEncoderDecoder,
    history: list[EpochRecord],
    diverged_at: int | None,
) -> None:
    with open(out_dir / "loss.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_npcc", "val_npcc"])
        for rec in history:
            writer.writerow(
                [rec.epoch, f"{rec.train_npcc:.6f}",
                 "" if rec.val_npcc is None else f"{rec.val_npcc:.6f}"]
            )
    meta = {
        "manifest": str(cfg.manifest),
        "epochs_run": len(history),
        "epochs_requested": cfg.epochs,
        "batch_size": cfg.batch_size,
        "learning_rate": cfg.learning_rate,
        "seed": cfg.seed,
        "input_offset": cfg.input_offset,
        "dense_blocks": cfg.dense_blocks,
        "parameters": parameter_count(model),
        "diverged_at_epoch": diverged_at,
    }
    (out_dir / "train_meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_checkpoint(path: str | Path, cfg: TrainConfig) -> DenseEncoderDecoder:
    """Rebuild the model recorded in a checkpoint file.

    Raises ValueError when the file is not a checkpoint written by `train`;
    RuntimeError when `cfg` describes a different architecture.
    """
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except (pickle.UnpicklingError, zipfile.BadZipFile, EOFError, RuntimeError) as e:
        raise ValueError(f"{path}: not a readable checkpoint: {e}") from e
    if not isinstance(state, dict) or "model" not in state or "n_channels" not in state:
        raise ValueError(f"{path}: missing checkpoint fields")
    model = build_model(cfg, int(state["n_channels"]))
    model.load_state_dict(state["model"])
    model.eval()
    return model
