"""Shared fixtures: datasets produced by the tomography engine's CLI."""

from __future__ import annotations

from pathlib import Path

import pytest

from engine_cli import make_dataset


@pytest.fixture(scope="session")
def micro_dataset(tmp_path_factory) -> Path:
    """Eight 32x32 examples split 6/1/1 for fast train/val/test coverage."""
    root = tmp_path_factory.mktemp("micro")
    return make_dataset(root / "data", count=8, splits="6,1,1", seed=101)


@pytest.fixture(scope="session")
def overfit_dataset(tmp_path_factory) -> Path:
    """Eight 32x32 training-only examples for the memorization check."""
    root = tmp_path_factory.mktemp("overfit")
    return make_dataset(root / "data", count=8, splits="8,0,0", seed=5)


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory) -> Path:
    """Sixty examples at the full 128x128 bench geometry, split 50/5/5."""
    root = tmp_path_factory.mktemp("desk")
    return make_dataset(
        root / "data", count=60, splits="50,5,5", seed=2025,
        small_grid=False, views=22,
    )
