"""Reader/writer for the shared on-disk array and manifest formats.

The tomography engine and this trainer exchange data exclusively through
files: raw ``.dtom`` arrays (32-byte header + row-major little-endian float64
payload) and a JSON dataset manifest.  This module implements the contract
from scratch so the trainer has no code dependency on the engine.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_MAGIC = b"DTOM"
_DTYPE_FLOAT64 = 1
_MAX_RANK = 4
_HEADER = struct.Struct("<4sIII4I")


class FormatError(ValueError):
    """A file does not conform to the shared on-disk contract."""


def read_array(path: str | Path) -> np.ndarray:
    """Load one ``.dtom`` array, validating the header and payload size."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, dtype, ndim, *dims = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if dtype != _DTYPE_FLOAT64:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    if not 1 <= ndim <= _MAX_RANK:
        raise FormatError(f"{path}: rank {ndim} outside 1..{_MAX_RANK}")
    shape = tuple(dims[:ndim])
    count = int(np.prod(shape))
    expected = _HEADER.size + 8 * count
    if len(raw) != expected:
        raise FormatError(f"{path}: payload is {len(raw)} bytes, expected {expected}")
    payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size, count=count)
    return payload.reshape(shape).copy()


def write_array(path: str | Path, array: np.ndarray) -> None:
    """Write an array in the shared format (used for calibrated outputs)."""
    if not 1 <= np.asarray(array).ndim <= _MAX_RANK:
        raise ValueError(
            f"rank must be 1..{_MAX_RANK}, got {np.asarray(array).ndim}"
        )
    arr = np.ascontiguousarray(array, dtype="<f8")
    if arr.size == 0:
        raise ValueError("empty dimensions not allowed")
    if not np.all(np.isfinite(arr)):
        raise ValueError("array contains non-finite values")
    dims = tuple(arr.shape) + (1,) * (_MAX_RANK - arr.ndim)
    header = _HEADER.pack(_MAGIC, FORMAT_VERSION, _DTYPE_FLOAT64, arr.ndim, *dims)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


@dataclass(frozen=True)
class ManifestEntry:
    """One dataset example: id, split, and paths resolved against the root."""

    example_id: str
    split: str
    truth_path: Path
    approximant_path: Path


@dataclass(frozen=True)
class Manifest:
    """The dataset index: geometry facts plus per-split example entries."""

    root: Path
    n_layers: int
    ny: int
    nx: int
    entries: tuple[ManifestEntry, ...]

    def split(self, name: str) -> tuple[ManifestEntry, ...]:
        found = tuple(e for e in self.entries if e.split == name)
        return found

    @property
    def layer_shape(self) -> tuple[int, int, int]:
        return (self.n_layers, self.ny, self.nx)


def load_manifest(path: str | Path) -> Manifest:
    """Parse ``manifest.json`` and resolve the per-example file paths."""
    path = Path(path)
    data = json.loads(path.read_text())
    if data.get("format_version") != FORMAT_VERSION:
        raise FormatError(
            f"{path}: unsupported manifest format version {data.get('format_version')}"
        )
    geom = data["geometry"]
    root = path.parent
    entries = []
    for e in data["examples"]:
        entries.append(
            ManifestEntry(
                example_id=e["id"],
                split=e["split"],
                truth_path=root / e["paths"]["truth"],
                approximant_path=root / e["paths"]["approximant"],
            )
        )
    return Manifest(
        root=root,
        n_layers=int(geom["n_layers"]),
        ny=int(geom["ny"]),
        nx=int(geom["nx"]),
        entries=tuple(entries),
    )
