"""Multi-layer phase objects: synthetic Manhattan-geometry layers and mask loading.

A sample is a stack of L thin phase masks separated by a homogeneous medium.
Etched regions carry a (by default negative) constant phase; the background is
zero.  Synthetic layers mimic integrated-circuit routing: random axis-aligned
rectangles plus optional long thin traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .optics import GridSpec

__all__ = [
    "ObjectStack",
    "PatternParams",
    "phase_from_depth",
    "synthesize_layer",
    "synthesize_stack",
    "refractive_index_map",
    "load_layer_images",
]

# Nominal etch phase of the desk-scale sample: 575 nm deep patterns filled
# with index-matching oil slightly below the glass index.
NOMINAL_ETCHED_PHASE = -0.33


@dataclass
class ObjectStack:
    """L phase layers on a shared grid, spaced ``dz`` meters apart.

    ``alpha`` carries a per-layer absorption map for completeness; this
    artifact models pure phase objects, so it must be identically zero.
    """

    phase: np.ndarray  # (L, ny, nx), radians
    dz: float
    grid: GridSpec
    alpha: np.ndarray | None = None

    def __post_init__(self) -> None:
        phase = np.asarray(self.phase, dtype=np.float64)
        if phase.ndim != 3 or phase.shape[0] < 1:
            raise ValueError(f"phase must be (L, ny, nx) with L >= 1, got {phase.shape}")
        if phase.shape[1:] != self.grid.shape:
            raise ValueError(
                f"layer shape {phase.shape[1:]} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(phase)):
            raise ValueError("phase contains non-finite values")
        if not (np.isfinite(self.dz) and self.dz >= 0):
            raise ValueError(f"dz must be finite and nonnegative, got {self.dz}")
        if self.alpha is None:
            alpha = np.zeros_like(phase)
        else:
            alpha = np.asarray(self.alpha, dtype=np.float64)
            if alpha.shape != phase.shape:
                raise ValueError("alpha shape must match phase shape")
            if np.any(alpha != 0.0):
                raise ValueError("absorption is fixed to zero for pure phase objects")
        self.phase = phase
        self.alpha = alpha

    @property
    def n_layers(self) -> int:
        return self.phase.shape[0]

    def transmittance(self, layer: int) -> np.ndarray:
        """Thin-mask complex transmittance exp(alpha + j*phase) of one layer."""
        return np.exp(self.alpha[layer] + 1j * self.phase[layer])

    @classmethod
    def zero(cls, n_layers: int, dz: float, grid: GridSpec) -> "ObjectStack":
        return cls(np.zeros((n_layers,) + grid.shape), dz, grid)

    def with_phase(self, phase: np.ndarray) -> "ObjectStack":
        return ObjectStack(phase, self.dz, self.grid)


@dataclass(frozen=True)
class PatternParams:
    """Controls for the synthetic IC-like layer generator.

    Sizes are in meters and converted to pixels through the grid pitch.
    Defaults target the desk-scale geometry (16 um pitch, 128x128): feature
    widths span roughly the 160-450 um range of the physical sample.
    """

    n_features: tuple[int, int] = (6, 14)
    width_range: tuple[float, float] = (160e-6, 450e-6)
    length_range: tuple[float, float] = (160e-6, 1.3e-3)
    wire_prob: float = 0.3
    etched_phase: float = NOMINAL_ETCHED_PHASE
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.n_features
        if not (0 <= lo <= hi):
            raise ValueError(f"feature count range must be ordered and >= 0, got {self.n_features}")
        for name, rng in (("width_range", self.width_range), ("length_range", self.length_range)):
            a, b = rng
            if not (0 < a <= b and np.isfinite(b)):
                raise ValueError(f"{name} must be positive and ordered, got {rng}")
        if not (0.0 <= self.wire_prob <= 1.0):
            raise ValueError(f"wire_prob must be in [0, 1], got {self.wire_prob}")
        if not (-np.pi < self.etched_phase <= np.pi):
            raise ValueError(f"etched_phase must lie in (-pi, pi], got {self.etched_phase}")


def phase_from_depth(depth: float, n_glass: float, n_oil: float, wavelength: float) -> float:
    """Phase shift of an etched pit of ``depth`` meters filled with oil.

    Returns (2*pi/wavelength) * depth * (n_oil - n_glass); negative when the
    oil index is below the glass index.
    """
    if not (np.isfinite(wavelength) and wavelength > 0):
        raise ValueError(f"wavelength must be positive, got {wavelength}")
    if not (np.isfinite(depth) and depth >= 0):
        raise ValueError(f"depth must be nonnegative, got {depth}")
    if not (np.isfinite(n_glass) and np.isfinite(n_oil)):
        raise ValueError("refractive indices must be finite")
    return 2.0 * np.pi / wavelength * depth * (n_oil - n_glass)


def _size_to_px(size_m: float, pitch: float) -> int:
    return max(1, int(round(size_m / pitch)))


def synthesize_layer(
    grid: GridSpec, params: PatternParams, rng: np.random.Generator | None = None
) -> np.ndarray:
    """One random Manhattan-geometry phase layer.

    The result is exactly two-valued {0, etched_phase} with all feature edges
    axis-aligned, and is deterministic for a given ``params.seed`` (unless an
    explicit ``rng`` is supplied).
    """
    if rng is None:
        rng = np.random.default_rng(params.seed)
    max_w = _size_to_px(params.width_range[1], grid.pitch)
    max_l = _size_to_px(params.length_range[1], grid.pitch)
    if max_w > min(grid.nx, grid.ny) or max_l > max(grid.nx, grid.ny):
        raise ValueError(
            f"features up to {max_w}x{max_l} px do not fit the {grid.nx}x{grid.ny} grid"
        )

    etched = np.zeros(grid.shape, dtype=bool)
    lo, hi = params.n_features
    count = int(rng.integers(lo, hi + 1))
    for _ in range(count):
        if rng.random() < params.wire_prob:
            # long thin trace at the minimum width
            w = _size_to_px(params.width_range[0], grid.pitch)
            length = _size_to_px(float(rng.uniform(*params.length_range)), grid.pitch)
        else:
            w = _size_to_px(float(rng.uniform(*params.width_range)), grid.pitch)
            length = _size_to_px(
                float(rng.uniform(params.width_range[0], params.length_range[1])),
                grid.pitch,
            )
        if rng.integers(2) == 0:
            h_px, w_px = w, length
        else:
            h_px, w_px = length, w
        h_px = min(h_px, grid.ny)
        w_px = min(w_px, grid.nx)
        iy = int(rng.integers(0, grid.ny - h_px + 1))
        ix = int(rng.integers(0, grid.nx - w_px + 1))
        etched[iy : iy + h_px, ix : ix + w_px] = True

    phase = np.zeros(grid.shape, dtype=np.float64)
    phase[etched] = params.etched_phase
    return phase


def synthesize_stack(
    grid: GridSpec, params: PatternParams, n_layers: int, dz: float
) -> ObjectStack:
    """A stack of independently synthesized layers traced to ``params.seed``."""
    children = np.random.SeedSequence(params.seed).spawn(n_layers)
    layers = [
        synthesize_layer(grid, params, rng=np.random.default_rng(child))
        for child in children
    ]
    return ObjectStack(np.stack(layers), dz, grid)


def refractive_index_map(stack: ObjectStack, k: float) -> np.ndarray:
    """Per-layer index perturbation phase / (k * dz).

    ``k`` is the vacuum wavenumber 2*pi/wavelength; ``dz`` here plays the role
    of the physical thickness over which the phase was accumulated.
    """
    if not (np.isfinite(k) and k > 0):
        raise ValueError(f"wavenumber must be positive, got {k}")
    if stack.dz <= 0:
        raise ValueError("layer thickness dz must be positive to convert phase to index")
    return stack.phase / (k * stack.dz)


def load_layer_images(
    paths: list[str | Path],
    etched_phase: float,
    grid: GridSpec,
    dz: float,
    allow_resample: bool = True,
) -> ObjectStack:
    """Build an ObjectStack from binary mask images, one file per layer.

    Black pixels map to ``etched_phase`` and white to zero.  Images whose size
    differs from the grid are resampled by nearest neighbor when
    ``allow_resample`` is set, and rejected otherwise.
    """
    if not paths:
        raise ValueError("at least one layer image is required")
    layers = []
    for p in paths:
        img = Image.open(p).convert("L")
        if img.size != (grid.nx, grid.ny):
            if not allow_resample:
                raise ValueError(
                    f"{p}: size {img.size} does not match grid ({grid.nx}, {grid.ny}) "
                    "and resampling is disabled"
                )
            img = img.resize((grid.nx, grid.ny), Image.NEAREST)
        arr = np.asarray(img, dtype=np.uint8)
        levels = np.unique(arr)
        if levels.size > 2:
            raise ValueError(f"{p}: expected a binary image, found {levels.size} gray levels")
        phase = np.zeros(grid.shape, dtype=np.float64)
        if levels.size == 2:
            phase[arr == levels[0]] = etched_phase  # darker level is etched
        elif levels[0] < 128:
            phase[:] = etched_phase
        layers.append(phase)
    return ObjectStack(np.stack(layers), dz, grid)
