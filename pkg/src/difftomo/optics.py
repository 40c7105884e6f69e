"""Sampled complex optical fields and the unitary angular-spectrum propagator.

Conventions used throughout the package:

* Fields live on a regular grid with the optical axis at pixel
  ``(ny // 2, nx // 2)`` (the ``centered`` convention).  Frequency-domain
  quantities use the standard DFT layout with the zero frequency at index 0,
  spanning +/- 1/(2*pitch) cycles/m.
* Both transform directions are scaled by 1/sqrt(nx*ny) (the unitary
  convention), so propagation over any distance preserves the L2 norm of a
  band-limited field exactly and the adjoint operator is simply propagation
  with the conjugated transfer function.
* Spatial frequencies beyond the propagating band ``kx^2 + ky^2 <= k^2`` are
  evanescent and are zeroed by the kernel.  On grids where the pitch is large
  compared to the wavelength the whole frequency plane is propagating and no
  energy is lost.

No zero-padding happens inside the operator; callers pick the grid size to
control wraparound (for a 58 mm defocus at 16 um pitch, pad the field of view
by at least 2x if wraparound matters for the application).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GridSpec",
    "ComplexField2D",
    "PropagationKernel",
    "make_kernel",
    "propagate",
    "adjoint_propagate",
]


@dataclass(frozen=True)
class GridSpec:
    """Sampling of the transverse (x, y) plane.

    ``pitch`` is the object-plane sample spacing in meters.  Field arrays are
    indexed ``[iy, ix]``.
    """

    nx: int
    ny: int
    pitch: float
    centered: bool = True

    def __post_init__(self) -> None:
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid must be at least 2x2, got {self.nx}x{self.ny}")
        if not (np.isfinite(self.pitch) and self.pitch > 0):
            raise ValueError(f"pitch must be finite and positive, got {self.pitch}")

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape ``(ny, nx)``."""
        return (self.ny, self.nx)

    @property
    def npix(self) -> int:
        return self.nx * self.ny

    def x_axis(self) -> np.ndarray:
        """Sample positions along x in meters."""
        idx = np.arange(self.nx, dtype=float)
        if self.centered:
            idx -= self.nx // 2
        return idx * self.pitch

    def y_axis(self) -> np.ndarray:
        idx = np.arange(self.ny, dtype=float)
        if self.centered:
            idx -= self.ny // 2
        return idx * self.pitch

    def xy_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) coordinate arrays of shape ``(ny, nx)``."""
        return np.meshgrid(self.x_axis(), self.y_axis())

    def kx_axis(self) -> np.ndarray:
        """Angular spatial frequencies along x, rad/m, DFT-ordered."""
        return 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.pitch)

    def ky_axis(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.ny, d=self.pitch)


@dataclass(frozen=True)
class ComplexField2D:
    """A sampled scalar field: one complex amplitude per grid pixel."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.shape != self.grid.shape:
            raise ValueError(
                f"field shape {vals.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", vals)

    def norm(self) -> float:
        """L2 norm of the sample values."""
        return float(np.linalg.norm(self.values))

    def intensity(self) -> np.ndarray:
        """Per-pixel squared modulus (real array)."""
        return np.abs(self.values) ** 2


@dataclass(frozen=True)
class PropagationKernel:
    """Frequency-domain transfer function for one propagation distance.

    ``values`` holds H(kx, ky) in DFT order.  On the propagating band
    |H| = 1; evanescent samples are exactly zero.
    """

    grid: GridSpec
    distance: float
    wavenumber: float
    values: np.ndarray

    def conj(self) -> "PropagationKernel":
        return PropagationKernel(
            self.grid, -self.distance, self.wavenumber, np.conj(self.values)
        )


def make_kernel(grid: GridSpec, distance: float, k: float) -> PropagationKernel:
    """Build the angular-spectrum transfer function for distance ``distance``.

    H(kx, ky) = exp(-1j * (k - sqrt(k^2 - kx^2 - ky^2)) * distance) inside the
    propagating band, zero outside.  ``k`` is the wavenumber (rad/m) of the
    homogeneous medium being traversed; ``distance`` may be negative for
    backward propagation.
    """
    if not np.isfinite(distance):
        raise ValueError(f"distance must be finite, got {distance}")
    if not (np.isfinite(k) and k > 0):
        raise ValueError(f"wavenumber must be finite and positive, got {k}")
    kxx, kyy = np.meshgrid(grid.kx_axis(), grid.ky_axis())
    kz2 = k * k - kxx * kxx - kyy * kyy
    band = kz2 >= 0.0
    values = np.zeros(grid.shape, dtype=np.complex128)
    values[band] = np.exp(-1j * (k - np.sqrt(kz2[band])) * distance)
    return PropagationKernel(grid, float(distance), float(k), values)


def _check_grids(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


def propagate(u: ComplexField2D, kernel: PropagationKernel) -> ComplexField2D:
    """Propagate ``u`` through the homogeneous slab described by ``kernel``."""
    _check_grids(u.grid, kernel.grid)
    spectrum = np.fft.fft2(u.values, norm="ortho")
    out = np.fft.ifft2(spectrum * kernel.values, norm="ortho")
    return ComplexField2D(u.grid, out)


def adjoint_propagate(u: ComplexField2D, kernel: PropagationKernel) -> ComplexField2D:
    """Apply the Hermitian adjoint of :func:`propagate` with the same kernel.

    Because propagation is diagonal in the unitary DFT basis, the adjoint is
    propagation with the conjugated transfer function, which on the
    propagating band equals propagation over ``-distance``.
    """
    _check_grids(u.grid, kernel.grid)
    spectrum = np.fft.fft2(u.values, norm="ortho")
    out = np.fft.ifft2(spectrum * np.conj(kernel.values), norm="ortho")
    return ComplexField2D(u.grid, out)
