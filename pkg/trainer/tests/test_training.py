"""Training loop behavior: determinism, logging, checkpoints, divergence,
and the memorization acceptance check."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest
import torch

from difftomo_trainer import (
    TrainConfig,
    TrainingDivergedError,
    load_checkpoint,
    open_split,
    train,
    write_array,
)


def make_synthetic_manifest(root: Path, approx_scale: float = 1.0, n: int = 6) -> Path:
    """A tiny hand-built dataset tree for trainer-only edge cases."""
    rng = np.random.default_rng(0)
    entries = []
    for i in range(n):
        ex = root / "examples" / f"ex{i}"
        ex.mkdir(parents=True)
        truth = np.where(rng.random((4, 32, 32)) < 0.3, -0.33, 0.0)
        approx = rng.standard_normal((4, 32, 32)) * approx_scale
        write_array(ex / "truth.dtom", truth)
        write_array(ex / "approx.dtom", approx)
        entries.append(
            {
                "id": f"ex{i}",
                "split": "train",
                "paths": {
                    "truth": f"examples/ex{i}/truth.dtom",
                    "approximant": f"examples/ex{i}/approx.dtom",
                },
            }
        )
    manifest = {
        "format_version": 1,
        "geometry": {"n_layers": 4, "ny": 32, "nx": 32},
        "examples": entries,
    }
    (root / "manifest.json").write_text(json.dumps(manifest))
    return root / "manifest.json"


class TestTrainLoop:
    def test_history_and_artifacts(self, micro_dataset, tmp_path):
        cfg = TrainConfig(
            manifest=micro_dataset / "manifest.json",
            epochs=3,
            out_dir=tmp_path / "run",
        )
        model, history = train(cfg)
        assert len(history) == 3
        assert [rec.epoch for rec in history] == [0, 1, 2]
        for rec in history:
            assert np.isfinite(rec.train_npcc)
            assert rec.val_npcc is not None and np.isfinite(rec.val_npcc)
        assert (tmp_path / "run" / "checkpoint.pt").is_file()
        assert (tmp_path / "run" / "loss.csv").is_file()
        assert (tmp_path / "run" / "train_meta.json").is_file()

    def test_loss_csv_matches_history(self, micro_dataset, tmp_path):
        cfg = TrainConfig(
            manifest=micro_dataset / "manifest.json",
            epochs=2,
            out_dir=tmp_path / "run",
        )
        _, history = train(cfg)
        with open(tmp_path / "run" / "loss.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        for row, rec in zip(rows, history):
            assert int(row["epoch"]) == rec.epoch
            assert float(row["train_npcc"]) == pytest.approx(rec.train_npcc, abs=1e-6)
            assert float(row["val_npcc"]) == pytest.approx(rec.val_npcc, abs=1e-6)

    def test_meta_records_configuration(self, micro_dataset, tmp_path):
        cfg = TrainConfig(
            manifest=micro_dataset / "manifest.json",
            epochs=2,
            batch_size=4,
            seed=9,
            input_offset=True,
            out_dir=tmp_path / "run",
        )
        model, _ = train(cfg)
        meta = json.loads((tmp_path / "run" / "train_meta.json").read_text())
        assert meta["epochs_run"] == meta["epochs_requested"] == 2
        assert meta["batch_size"] == 4
        assert meta["seed"] == 9
        assert meta["input_offset"] is True
        assert meta["diverged_at_epoch"] is None
        assert meta["parameters"] == sum(p.numel() for p in model.parameters())

    def test_same_seed_reproduces_weights(self, micro_dataset, tmp_path):
        def run(out):
            cfg = TrainConfig(
                manifest=micro_dataset / "manifest.json",
                epochs=2,
                seed=4,
                out_dir=tmp_path / out,
            )
            return train(cfg)[0].state_dict()

        first, second = run("a"), run("b")
        assert set(first) == set(second)
        for key in first:
            assert torch.equal(first[key], second[key]), key

    def test_training_loss_decreases(self, micro_dataset, tmp_path):
        cfg = TrainConfig(
            manifest=micro_dataset / "manifest.json",
            epochs=10,
            out_dir=tmp_path / "run",
        )
        _, history = train(cfg)
        assert history[-1].train_npcc < history[0].train_npcc

    def test_empty_train_split_raises(self, tmp_path):
        manifest = make_synthetic_manifest(tmp_path / "data")
        data = json.loads(manifest.read_text())
        for entry in data["examples"]:
            entry["split"] = "test"
        manifest.write_text(json.dumps(data))
        cfg = TrainConfig(manifest=manifest, epochs=1, out_dir=tmp_path / "run")
        with pytest.raises(ValueError, match="train split"):
            train(cfg)


class TestCheckpoints:
    def test_round_trip_reproduces_outputs(self, micro_dataset, tmp_path):
        cfg = TrainConfig(
            manifest=micro_dataset / "manifest.json",
            epochs=2,
            out_dir=tmp_path / "run",
        )
        model, _ = train(cfg)
        model.eval()
        restored = load_checkpoint(tmp_path / "run" / "checkpoint.pt", cfg)
        x = open_split(cfg.manifest, "test")[0][0][None]
        with torch.no_grad():
            assert torch.allclose(model(x), restored(x), atol=1e-7)

    def test_architecture_mismatch_fails(self, micro_dataset, tmp_path):
        cfg = TrainConfig(
            manifest=micro_dataset / "manifest.json",
            epochs=1,
            out_dir=tmp_path / "run",
        )
        train(cfg)
        other = TrainConfig(
            manifest=cfg.manifest, dense_blocks=2, out_dir=cfg.out_dir
        )
        with pytest.raises(RuntimeError):
            load_checkpoint(tmp_path / "run" / "checkpoint.pt", other)


class TestDivergence:
    def test_nonfinite_first_epoch_aborts_without_checkpoint(self, tmp_path):
        # values beyond float32 range turn to inf on load and poison the loss
        manifest = make_synthetic_manifest(tmp_path / "data", approx_scale=1e39)
        cfg = TrainConfig(manifest=manifest, epochs=3, out_dir=tmp_path / "run")
        with np.errstate(over="ignore"):
            with pytest.raises(TrainingDivergedError, match="epoch 0"):
                train(cfg)
        assert not (tmp_path / "run" / "checkpoint.pt").exists()
        meta = json.loads((tmp_path / "run" / "train_meta.json").read_text())
        assert meta["diverged_at_epoch"] == 0
        assert meta["epochs_run"] == 0

    def test_blowup_keeps_last_finite_checkpoint(self, tmp_path):
        # just past the stability edge: the first epoch survives, continued
        # weight growth then overflows the float32 activation statistics
        manifest = make_synthetic_manifest(tmp_path / "data")
        cfg = TrainConfig(
            manifest=manifest,
            epochs=10,
            learning_rate=3.0,
            out_dir=tmp_path / "run",
        )
        with pytest.raises(TrainingDivergedError, match="kept checkpoint"):
            train(cfg)
        meta = json.loads((tmp_path / "run" / "train_meta.json").read_text())
        assert meta["diverged_at_epoch"] is not None
        assert meta["diverged_at_epoch"] >= 1
        restored = load_checkpoint(tmp_path / "run" / "checkpoint.pt", cfg)
        x = torch.zeros(1, 4, 32, 32)
        with torch.no_grad():
            assert torch.all(torch.isfinite(restored(x)))


class TestMemorization:
    def test_overfits_eight_examples(self, overfit_dataset, tmp_path):
        """Eight training examples must be driven to NPCC <= -0.95 within
        200 epochs — the capacity sanity check for the whole pipeline."""
        cfg = TrainConfig(
            manifest=overfit_dataset / "manifest.json",
            epochs=200,
            out_dir=tmp_path / "run",
        )
        _, history = train(cfg)
        best = min(rec.train_npcc for rec in history)
        assert best <= -0.95, f"best training NPCC {best:.4f} after 200 epochs"
        assert all(rec.val_npcc is None for rec in history)
