"""Versioned on-disk formats for stacks, measurements, and datasets.

Arrays are stored raw: a 32-byte header (magic ``DTOM``, format version,
dtype code, rank, four dimension slots) followed by row-major little-endian
IEEE-754 doubles.  Keeping full 64-bit precision on disk makes round-trips
bit-exact, so regression tests can compare files directly; consumers are free
to downconvert in memory.

A dataset is a directory tree of self-contained examples plus a single JSON
manifest written last as the commit point:

    manifest.json
    examples/<id>/truth.dtom         ground-truth phase stack      (L, ny, nx)
    examples/<id>/meas.dtom          noisy intensity views         (V, ny, nx)
    examples/<id>/approx.dtom        gradient-descent approximant  (L, ny, nx)
    examples/<id>/meta.json          geometry, orientations, seeds
    renders/                         optional image exports

Everything is deterministic given the generation seed: per-example RNG seeds
are drawn up front, each example writes only inside its own subdirectory, and
the manifest carries no timestamps, so two runs with the same seed produce
byte-identical trees.
"""

from __future__ import annotations

import json
import shutil
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

from ._version import __version__
from .forward import (
    AcquisitionGeometry,
    MeasurementSet,
    Orientation,
    default_orientations,
    simulate_measurements,
)
from .inverse import SolverConfig, approximant
from .optics import GridSpec
from .phantom import ObjectStack, PatternParams, synthesize_stack

__all__ = [
    "FORMAT_VERSION",
    "write_array",
    "read_array",
    "export_image",
    "import_image",
    "geometry_to_dict",
    "geometry_from_dict",
    "save_stack",
    "load_stack",
    "write_measurement_set",
    "read_measurement_set",
    "ExampleEntry",
    "DatasetManifest",
    "load_manifest",
    "generate_dataset",
]

FORMAT_VERSION = 1

_MAGIC = b"DTOM"
_DTYPE_FLOAT64 = 1
_MAX_RANK = 4
_HEADER = struct.Struct("<4sIII4I")  # magic, version, dtype, ndim, dims[4]
assert _HEADER.size == 32


class FormatError(ValueError):
    """A file failed header or size validation."""


# ---------------------------------------------------------------------------
# Raw array format
# ---------------------------------------------------------------------------


def write_array(path: str | Path, array: np.ndarray) -> None:
    """Write a finite float array of rank 1..4 in the raw header+payload form."""
    if not 1 <= np.asarray(array).ndim <= _MAX_RANK:
        raise ValueError(f"rank must be 1..{_MAX_RANK}, got {np.asarray(array).ndim}")
    arr = np.ascontiguousarray(array, dtype="<f8")
    if arr.size == 0:
        raise ValueError(f"empty dimensions not allowed, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("array contains non-finite values")
    dims = tuple(arr.shape) + (1,) * (_MAX_RANK - arr.ndim)
    header = _HEADER.pack(_MAGIC, FORMAT_VERSION, _DTYPE_FLOAT64, arr.ndim, *dims)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def read_array(path: str | Path) -> np.ndarray:
    """Read an array written by :func:`write_array`, validating the header."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError(f"{path}: truncated header ({len(header)} bytes)")
        magic, version, dtype, ndim, *dims4 = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatError(
                f"{path}: format version {version} not supported (expected {FORMAT_VERSION})"
            )
        if dtype != _DTYPE_FLOAT64:
            raise FormatError(f"{path}: unknown dtype code {dtype}")
        if not 1 <= ndim <= _MAX_RANK:
            raise FormatError(f"{path}: bad rank {ndim}")
        dims = tuple(dims4[:ndim])
        if any(d < 1 for d in dims):
            raise FormatError(f"{path}: bad dimensions {dims}")
        n_values = int(np.prod(dims))
        payload = fh.read()
    expected = 8 * n_values
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} for dims {dims}"
        )
    return np.frombuffer(payload, dtype="<f8").reshape(dims).copy()


# ---------------------------------------------------------------------------
# Image export
# ---------------------------------------------------------------------------


def export_image(map2d: np.ndarray, path: str | Path, vmin: float, vmax: float) -> None:
    """Render a real 2D map to a 16-bit grayscale PNG with a JSON sidecar.

    Values map linearly from [vmin, vmax] to the full 16-bit scale and are
    clipped outside it; the sidecar records the range so the image can be
    dequantized.  The display range may deliberately exceed the data range.
    """
    arr = np.asarray(map2d, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D map, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("map contains non-finite values")
    if not (np.isfinite(vmin) and np.isfinite(vmax) and vmax > vmin):
        raise ValueError(f"degenerate display range [{vmin}, {vmax}]")
    unit = np.clip((arr - vmin) / (vmax - vmin), 0.0, 1.0)
    codes = np.round(unit * 65535.0).astype(np.uint16)
    path = Path(path)
    Image.fromarray(codes).save(path, format="PNG")
    sidecar = {
        "vmin": vmin,
        "vmax": vmax,
        "shape": list(arr.shape),
        "note": "display range may exceed the data range; no saturation implied",
    }
    _sidecar_path(path).write_text(json.dumps(sidecar, indent=2) + "\n")


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def import_image(path: str | Path) -> np.ndarray:
    """Invert :func:`export_image` up to 16-bit quantization error."""
    path = Path(path)
    sidecar = json.loads(_sidecar_path(path).read_text())
    with Image.open(path) as im:
        codes = np.asarray(im, dtype=np.float64)
    return sidecar["vmin"] + codes / 65535.0 * (sidecar["vmax"] - sidecar["vmin"])


# ---------------------------------------------------------------------------
# Geometry and measurement persistence
# ---------------------------------------------------------------------------


def geometry_to_dict(geom: AcquisitionGeometry) -> dict:
    return {
        "wavelength": geom.wavelength,
        "n_medium": geom.n_medium,
        "d_defocus": geom.d_defocus,
        "nx": geom.grid.nx,
        "ny": geom.grid.ny,
        "pitch": geom.grid.pitch,
        "dz": geom.dz,
        "n_layers": geom.n_layers,
        "photon_flux": geom.photon_flux,
        "read_sigma": geom.read_sigma,
        "read_mean": geom.read_mean,
        "clip_negative": geom.clip_negative,
    }


def geometry_from_dict(d: dict) -> AcquisitionGeometry:
    return AcquisitionGeometry(
        wavelength=d["wavelength"],
        n_medium=d["n_medium"],
        d_defocus=d["d_defocus"],
        grid=GridSpec(d["nx"], d["ny"], d["pitch"]),
        dz=d["dz"],
        n_layers=d["n_layers"],
        photon_flux=d["photon_flux"],
        read_sigma=d["read_sigma"],
        read_mean=d["read_mean"],
        clip_negative=d["clip_negative"],
    )


def save_stack(path: str | Path, stack: ObjectStack) -> None:
    """Persist the (L, ny, nx) phase array; spacing lives in the metadata."""
    write_array(path, stack.phase)


def load_stack(path: str | Path, dz: float, grid: GridSpec) -> ObjectStack:
    phase = read_array(path)
    if phase.ndim != 3:
        raise FormatError(f"{path}: expected a rank-3 stack, got rank {phase.ndim}")
    return ObjectStack(phase, dz, grid)


def write_measurement_set(
    directory: str | Path, ms: MeasurementSet, extra_meta: dict | None = None
) -> None:
    """Write ``meas.dtom`` plus ``meta.json`` into a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_array(directory / "meas.dtom", ms.images)
    meta = {
        "format_version": FORMAT_VERSION,
        "geometry": geometry_to_dict(ms.geometry),
        "orientations": [[o.theta_x, o.theta_y] for o in ms.orientations],
    }
    if extra_meta:
        meta.update(extra_meta)
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def read_measurement_set(directory: str | Path) -> tuple[MeasurementSet, dict]:
    """Read a measurement directory back into a MeasurementSet and its metadata."""
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise FormatError(
            f"{directory}: metadata format version {meta.get('format_version')} not supported"
        )
    geom = geometry_from_dict(meta["geometry"])
    orientations = tuple(Orientation(tx, ty) for tx, ty in meta["orientations"])
    images = read_array(directory / "meas.dtom")
    if images.ndim != 3:
        raise FormatError(f"{directory}: expected rank-3 measurements, got {images.ndim}")
    return MeasurementSet(geom, orientations, images), meta


# ---------------------------------------------------------------------------
# Dataset manifest and generation
# ---------------------------------------------------------------------------

_SPLITS = ("train", "validation", "test")


@dataclass(frozen=True)
class ExampleEntry:
    """One dataset example: id, split, file paths relative to the root, seed."""

    example_id: str
    split: str
    paths: dict  # {"truth", "measurements", "approximant", "meta"} -> rel path
    seed: int

    def __post_init__(self) -> None:
        if self.split not in _SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        missing = {"truth", "measurements", "approximant", "meta"} - set(self.paths)
        if missing:
            raise ValueError(f"example {self.example_id}: missing paths {sorted(missing)}")


@dataclass(frozen=True)
class DatasetManifest:
    """Index of a generated dataset; the tree is valid iff this file exists."""

    format_version: int
    geometry: dict
    counts: dict  # split -> count
    examples: tuple[ExampleEntry, ...]
    created: dict

    def __post_init__(self) -> None:
        ids = [e.example_id for e in self.examples]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate example ids in manifest")
        tally = {s: 0 for s in _SPLITS}
        for e in self.examples:
            tally[e.split] += 1
        for s in _SPLITS:
            if tally[s] != self.counts.get(s, 0):
                raise ValueError(
                    f"split {s!r}: manifest count {self.counts.get(s, 0)} != {tally[s]} entries"
                )

    @property
    def n_examples(self) -> int:
        return len(self.examples)

    def entries(self, split: str | None = None) -> tuple[ExampleEntry, ...]:
        if split is None:
            return self.examples
        if split not in _SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return tuple(e for e in self.examples if e.split == split)

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "geometry": self.geometry,
            "counts": dict(self.counts),
            "examples": [
                {
                    "id": e.example_id,
                    "split": e.split,
                    "paths": dict(e.paths),
                    "seed": e.seed,
                }
                for e in self.examples
            ],
            "created": dict(self.created),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        if d.get("format_version") != FORMAT_VERSION:
            raise FormatError(
                f"manifest format version {d.get('format_version')} not supported"
            )
        examples = tuple(
            ExampleEntry(e["id"], e["split"], e["paths"], e["seed"]) for e in d["examples"]
        )
        return cls(d["format_version"], d["geometry"], d["counts"], examples, d["created"])

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def verify(self, root: str | Path) -> None:
        """Check every referenced file exists with geometry-consistent dims."""
        root = Path(root)
        geom = geometry_from_dict(self.geometry)
        layer_shape = (geom.n_layers,) + geom.grid.shape
        for e in self.examples:
            for key in ("truth", "approximant"):
                arr = read_array(root / e.paths[key])
                if arr.shape != layer_shape:
                    raise FormatError(
                        f"{e.example_id}/{key}: shape {arr.shape} != {layer_shape}"
                    )
            ms, _ = read_measurement_set(root / Path(e.paths["measurements"]).parent)
            if ms.geometry.grid != geom.grid:
                raise FormatError(f"{e.example_id}: measurement grid mismatch")


def load_manifest(path: str | Path) -> DatasetManifest:
    return DatasetManifest.from_dict(json.loads(Path(path).read_text()))


def _generate_example(
    root: Path,
    example_id: str,
    split: str,
    pattern_seed: int,
    noise_seed: int,
    params: PatternParams,
    geom: AcquisitionGeometry,
    orientations: tuple[Orientation, ...],
    cfg: SolverConfig,
) -> ExampleEntry:
    example_dir = root / "examples" / example_id
    try:
        truth = synthesize_stack(
            geom.grid, replace(params, seed=pattern_seed), geom.n_layers, geom.dz
        )
        ms = simulate_measurements(truth, geom, orientations, noise=True, seed=noise_seed)
        approx, history = approximant(ms, geom, cfg)

        example_dir.mkdir(parents=True, exist_ok=True)
        save_stack(example_dir / "truth.dtom", truth)
        save_stack(example_dir / "approx.dtom", approx)
        extra = {
            "id": example_id,
            "split": split,
            "pattern_seed": pattern_seed,
            "noise_seed": noise_seed,
            "approximant": {
                "n_iters": cfg.n_iters,
                "step": cfg.step,
                "tv_alpha": cfg.tv_alpha,
                "cost_history": history,
            },
        }
        write_measurement_set(example_dir, ms, extra_meta=extra)
    except Exception:
        # never leave a half-written example behind (e.g. on a full disk)
        shutil.rmtree(example_dir, ignore_errors=True)
        raise
    rel = f"examples/{example_id}"
    return ExampleEntry(
        example_id,
        split,
        {
            "truth": f"{rel}/truth.dtom",
            "measurements": f"{rel}/meas.dtom",
            "approximant": f"{rel}/approx.dtom",
            "meta": f"{rel}/meta.json",
        },
        pattern_seed,
    )


def generate_dataset(
    count: int,
    splits: tuple[int, int, int],
    params: PatternParams,
    geom: AcquisitionGeometry,
    out_dir: str | Path,
    seed: int = 0,
    solver_cfg: SolverConfig | None = None,
    n_views: int = 22,
    force: bool = False,
    threads: int = 1,
) -> DatasetManifest:
    """Synthesize, measure, and approximate ``count`` examples on disk.

    ``splits`` gives the (train, validation, test) partition and must sum to
    ``count``; examples fill the splits in order.  The default approximant is
    the cheap single-step setting (K=1, s=0.1, no TV), configurable through
    ``solver_cfg``.  An existing non-empty output directory is refused unless
    ``force`` is set, in which case it is deleted first.  The manifest is
    written last and is the signal that the tree is complete.
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if len(splits) != 3 or any(s < 0 for s in splits) or sum(splits) != count:
        raise ValueError(f"splits {splits} must be three nonnegative counts summing to {count}")
    if solver_cfg is None:
        solver_cfg = SolverConfig(n_iters=1, step=0.1, tv_alpha=0.0, momentum=False)

    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()):
        if not force:
            raise FileExistsError(
                f"{out_dir} already contains files; pass force=True to regenerate"
            )
        shutil.rmtree(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    orientations = default_orientations(n_views) if n_views else ()
    split_names = [s for s, n in zip(_SPLITS, splits) for _ in range(n)]
    master = np.random.SeedSequence(seed)
    seed_pairs = [
        tuple(int(v) for v in np.random.default_rng(child).integers(0, 2**31 - 1, size=2))
        for child in master.spawn(count)
    ]

    def build(i: int) -> ExampleEntry:
        return _generate_example(
            out_dir,
            f"ex{i:05d}",
            split_names[i],
            seed_pairs[i][0],
            seed_pairs[i][1],
            params,
            geom,
            orientations,
            solver_cfg,
        )

    if threads > 1 and count > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(build, range(count)))
    else:
        entries = [build(i) for i in range(count)]

    manifest = DatasetManifest(
        format_version=FORMAT_VERSION,
        geometry=geometry_to_dict(geom),
        counts={s: n for s, n in zip(_SPLITS, splits)},
        examples=tuple(entries),
        created={
            "tool": "difftomo",
            "tool_version": __version__,
            "seed": seed,
            "count": count,
            "n_views": n_views,
        },
    )
    manifest.write(out_dir / "manifest.json")
    return manifest
