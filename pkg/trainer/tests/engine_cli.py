"""Subprocess access to the tomography engine's CLI.

The trainer's only contract with the engine is files, so tests obtain
datasets and reference scores by shelling out rather than importing it.
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

# Feature sizes that fit a 32 px grid at the default 16 um pitch (4-12 px).
SMALL_PATTERN = {
    "n_features": [2, 4],
    "width_range": [64e-6, 128e-6],
    "length_range": [64e-6, 192e-6],
}


def run_engine(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "difftomo", *args],
        capture_output=True,
        text=True,
    )


def make_dataset(
    out_dir: Path,
    count: int,
    splits: str,
    seed: int,
    small_grid: bool = True,
    views: int = 6,
) -> Path:
    config = out_dir.parent / f"{out_dir.name}_config.json"
    payload: dict = {}
    if small_grid:
        payload = {"geometry": {"nx": 32, "ny": 32}, "pattern": SMALL_PATTERN}
    config.write_text(json.dumps(payload))
    proc = run_engine(
        "dataset",
        "--out", str(out_dir),
        "--count", str(count),
        "--splits", splits,
        "--seed", str(seed),
        "--views", str(views),
        "--config", str(config),
    )
    assert proc.returncode == 0, f"dataset generation failed:\n{proc.stderr}"
    return out_dir
