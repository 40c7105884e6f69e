"""Network construction: shape contract, rectified output, reproducibility."""

from __future__ import annotations

import pytest
import torch

from difftomo_trainer import DenseEncoderDecoder, TrainConfig, build_model, parameter_count


def make_model(n_channels=4, seed=0, **overrides) -> DenseEncoderDecoder:
    torch.manual_seed(seed)
    cfg = TrainConfig(manifest="unused", **overrides)
    return build_model(cfg, n_channels)


class TestShapeContract:
    def test_bench_scale_shape(self):
        model = make_model(n_channels=4)
        out = model(torch.randn(1, 4, 128, 128))
        assert out.shape == (1, 4, 128, 128)

    def test_batch_and_channel_counts_preserved(self):
        model = make_model(n_channels=2)
        out = model(torch.randn(3, 2, 32, 32))
        assert out.shape == (3, 2, 32, 32)

    def test_rejects_wrong_channel_count(self):
        model = make_model(n_channels=4)
        with pytest.raises(ValueError, match="input"):
            model(torch.randn(1, 3, 32, 32))

    def test_rejects_indivisible_grid(self):
        model = make_model(n_channels=4)
        with pytest.raises(ValueError, match="divisible"):
            model(torch.randn(1, 4, 30, 30))

    def test_divisibility_follows_block_count(self):
        model = make_model(n_channels=4, dense_blocks=2)
        assert model(torch.randn(1, 4, 28, 28)).shape == (1, 4, 28, 28)
        with pytest.raises(ValueError, match="divisible"):
            model(torch.randn(1, 4, 30, 30))

    def test_rejects_non_4d_input(self):
        model = make_model(n_channels=4)
        with pytest.raises(ValueError):
            model(torch.randn(4, 32, 32))


class TestRectifiedOutput:
    def test_zero_input_gives_nonnegative_output(self):
        model = make_model(n_channels=4)
        model.eval()
        out = model(torch.zeros(1, 4, 32, 32))
        assert torch.all(out >= 0)

    def test_random_input_gives_nonnegative_output(self):
        model = make_model(n_channels=4, seed=3)
        model.eval()
        for seed in range(3):
            torch.manual_seed(seed)
            out = model(torch.randn(2, 4, 32, 32) * 5.0)
            assert torch.all(out >= 0)
            assert torch.all(torch.isfinite(out))


class TestReproducibility:
    def test_parameter_count_stable_across_seeds(self):
        counts = {parameter_count(make_model(seed=s)) for s in range(4)}
        assert len(counts) == 1
        assert counts.pop() > 0

    def test_same_seed_gives_identical_weights(self):
        a, b = make_model(seed=7), make_model(seed=7)
        for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert ka == kb
            assert torch.equal(va, vb)

    def test_different_seeds_give_different_weights(self):
        a, b = make_model(seed=0), make_model(seed=1)
        assert any(
            not torch.equal(va, vb)
            for va, vb in zip(a.state_dict().values(), b.state_dict().values())
        )

    def test_channel_count_changes_parameters(self):
        assert parameter_count(make_model(n_channels=2)) != parameter_count(
            make_model(n_channels=6)
        )

    def test_growth_rate_changes_parameters(self):
        assert parameter_count(make_model(growth_rate=8)) < parameter_count(
            make_model(growth_rate=16)
        )
