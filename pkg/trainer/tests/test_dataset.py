"""Dataset adapter: manifest-backed pair loading and the input offset."""

from __future__ import annotations

import json

import numpy as np
import pytest
import torch

from difftomo_trainer import StackPairDataset, load_manifest, open_split, read_array, write_array


class TestLoading:
    def test_split_sizes(self, micro_dataset):
        manifest = load_manifest(micro_dataset / "manifest.json")
        assert len(StackPairDataset(manifest, "train")) == 6
        assert len(StackPairDataset(manifest, "validation")) == 1
        assert len(StackPairDataset(manifest, "test")) == 1

    def test_items_are_float32_pairs(self, micro_dataset):
        ds = open_split(micro_dataset / "manifest.json", "train")
        inputs, targets = ds[0]
        for t in (inputs, targets):
            assert isinstance(t, torch.Tensor)
            assert t.dtype == torch.float32
            assert t.shape == (4, 32, 32)
            assert torch.all(torch.isfinite(t))

    def test_pairs_match_files_on_disk(self, micro_dataset):
        ds = open_split(micro_dataset / "manifest.json", "train")
        entry = ds.entries[2]
        inputs, targets = ds[2]
        np.testing.assert_allclose(
            inputs.numpy(), read_array(entry.approximant_path), rtol=1e-6
        )
        np.testing.assert_allclose(
            targets.numpy(), read_array(entry.truth_path), rtol=1e-6
        )

    def test_rejects_unknown_split(self, micro_dataset):
        manifest = load_manifest(micro_dataset / "manifest.json")
        with pytest.raises(ValueError, match="split"):
            StackPairDataset(manifest, "holdout")


class TestInputOffset:
    def test_offset_makes_inputs_nonnegative(self, micro_dataset):
        plain = open_split(micro_dataset / "manifest.json", "train")
        offset = open_split(micro_dataset / "manifest.json", "train", input_offset=True)
        saw_negative = False
        for i in range(len(plain)):
            raw, _ = plain[i]
            shifted, _ = offset[i]
            saw_negative |= bool((raw < 0).any())
            assert float(shifted.min()) == pytest.approx(0.0, abs=1e-6)
            np.testing.assert_allclose(
                shifted.numpy(), raw.numpy() - raw.numpy().min(), atol=1e-6
            )
        # one gradient step on intensity data drives phases negative, so the
        # flag must actually have something to shift
        assert saw_negative

    def test_offset_leaves_targets_alone(self, micro_dataset):
        plain = open_split(micro_dataset / "manifest.json", "train")
        offset = open_split(micro_dataset / "manifest.json", "train", input_offset=True)
        for i in range(len(plain)):
            assert torch.equal(plain[i][1], offset[i][1])


class TestShapeGuards:
    def _manifest_with_bad_truth(self, tmp_path, shape):
        ex = tmp_path / "examples" / "ex0"
        ex.mkdir(parents=True)
        write_array(ex / "truth.dtom", np.zeros(shape) - 0.1)
        write_array(ex / "approx.dtom", np.zeros((4, 32, 32)))
        manifest = {
            "format_version": 1,
            "geometry": {"n_layers": 4, "ny": 32, "nx": 32},
            "examples": [
                {
                    "id": "ex0",
                    "split": "train",
                    "paths": {
                        "truth": "examples/ex0/truth.dtom",
                        "approximant": "examples/ex0/approx.dtom",
                    },
                }
            ],
        }
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps(manifest))
        return path

    def test_rejects_stack_not_matching_geometry(self, tmp_path):
        path = self._manifest_with_bad_truth(tmp_path, (4, 32, 16))
        ds = open_split(path, "train")
        with pytest.raises(ValueError, match="shape"):
            ds[0]

    def test_accepts_matching_geometry(self, tmp_path):
        path = self._manifest_with_bad_truth(tmp_path, (4, 32, 32))
        ds = open_split(path, "train")
        inputs, targets = ds[0]
        assert inputs.shape == targets.shape == (4, 32, 32)
