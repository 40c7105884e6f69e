"""The measurement model: tilted plane-wave illumination, multi-slice beam
propagation through the layer stack, defocus to the detector, intensity
detection and shot/read noise.

Sample tilt is modeled as an equivalent tilt of the incident plane wave with
the stack left untilted and the layer spacing uncorrected.  Inter-layer
propagation uses the wavenumber of the immersion medium; the defocus leg to
the detector happens in air and uses the free-space wavenumber.

Note on sampling: a tilt of angle theta carries the transverse frequency
sin(theta)/lambda.  At 16 um pitch this exceeds the grid Nyquist rate for
tilts beyond about 1.1 degrees, so steeper carriers alias to lower effective
tilts.  The discrete model remains exactly self-consistent (simulation,
cost and gradients all share it), which is what the reconstruction relies on.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .optics import ComplexField2D, GridSpec, PropagationKernel, make_kernel, propagate
from .phantom import ObjectStack

__all__ = [
    "AcquisitionGeometry",
    "Orientation",
    "MeasurementSet",
    "BPMCache",
    "incident_field",
    "bpm_forward",
    "detect_intensity",
    "apply_noise",
    "simulate_measurements",
    "default_orientations",
    "fresnel_number",
]

OIL_INDEX = 1.4005
GLASS_INDEX = 1.457


def _default_grid() -> GridSpec:
    return GridSpec(128, 128, 16e-6)


@dataclass(frozen=True)
class AcquisitionGeometry:
    """Wavelength, geometry and detector parameters of one acquisition.

    Defaults reproduce the desk-scale setup: HeNe illumination, four layers
    0.5 mm apart in oil/glass, 58 mm defocus, 128x128 grid at 16 um pitch,
    1e3 photons/pixel and 13 counts of Gaussian read noise.
    """

    wavelength: float = 632.8e-9
    n_medium: float = (OIL_INDEX + GLASS_INDEX) / 2.0
    d_defocus: float = 58e-3
    grid: GridSpec = field(default_factory=_default_grid)
    dz: float = 0.5e-3
    n_layers: int = 4
    photon_flux: float = 1e3
    read_sigma: float = 13.0
    read_mean: float = 0.0
    clip_negative: bool = False

    def __post_init__(self) -> None:
        if not (np.isfinite(self.wavelength) and self.wavelength > 0):
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        if not (np.isfinite(self.n_medium) and self.n_medium >= 1.0):
            raise ValueError(f"n_medium must be >= 1, got {self.n_medium}")
        if not np.isfinite(self.d_defocus):
            raise ValueError("d_defocus must be finite")
        if not (np.isfinite(self.dz) and self.dz >= 0):
            raise ValueError(f"dz must be nonnegative, got {self.dz}")
        if self.n_layers < 1:
            raise ValueError(f"n_layers must be >= 1, got {self.n_layers}")
        if not (np.isfinite(self.photon_flux) and self.photon_flux >= 0):
            raise ValueError(f"photon_flux must be >= 0, got {self.photon_flux}")
        if not (np.isfinite(self.read_sigma) and self.read_sigma >= 0):
            raise ValueError(f"read_sigma must be >= 0, got {self.read_sigma}")
        if not np.isfinite(self.read_mean):
            raise ValueError("read_mean must be finite")

    @property
    def k0(self) -> float:
        """Free-space wavenumber, rad/m."""
        return 2.0 * np.pi / self.wavelength

    @property
    def k_medium(self) -> float:
        """Wavenumber in the inter-layer medium, rad/m."""
        return self.n_medium * self.k0


@dataclass(frozen=True)
class Orientation:
    """Sample tilt about the x and y axes, in degrees."""

    theta_x: float
    theta_y: float
    tilt_limit_deg: float = 15.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.theta_x) and np.isfinite(self.theta_y)):
            raise ValueError("tilt angles must be finite")
        if abs(self.theta_x) > self.tilt_limit_deg or abs(self.theta_y) > self.tilt_limit_deg:
            raise ValueError(
                f"tilt ({self.theta_x}, {self.theta_y}) deg exceeds the "
                f"{self.tilt_limit_deg} deg paraxial-tilt guard"
            )


@dataclass
class MeasurementSet:
    """Intensity images for a sequence of sample orientations."""

    geometry: AcquisitionGeometry
    orientations: tuple[Orientation, ...]
    images: np.ndarray  # (N_v, ny, nx), detector counts

    def __post_init__(self) -> None:
        self.orientations = tuple(self.orientations)
        images = np.asarray(self.images, dtype=np.float64)
        expected = (len(self.orientations),) + self.geometry.grid.shape
        if images.shape != expected:
            raise ValueError(f"images shape {images.shape} != {expected}")
        if not np.all(np.isfinite(images)):
            raise ValueError("measurement images contain non-finite values")
        if self.geometry.clip_negative and np.any(images < 0):
            raise ValueError("negative intensities with clipping enabled")
        self.images = images

    @property
    def n_views(self) -> int:
        return len(self.orientations)


@dataclass(frozen=True)
class BPMCache:
    """Per-layer fields retained by the forward pass for the adjoint pass."""

    u_inc: ComplexField2D
    u_layers: tuple[ComplexField2D, ...]  # field just after each mask
    u_det: ComplexField2D
    kernel_dz: PropagationKernel
    kernel_det: PropagationKernel


def incident_field(geom: AcquisitionGeometry, o: Orientation) -> ComplexField2D:
    """Unit-amplitude plane wave tilted by the sample orientation."""
    k = geom.k_medium
    xx, yy = geom.grid.xy_mesh()
    phase = k * (
        xx * math.sin(math.radians(o.theta_x)) + yy * math.sin(math.radians(o.theta_y))
    )
    return ComplexField2D(geom.grid, np.exp(1j * phase))


def model_kernels(geom: AcquisitionGeometry) -> tuple[PropagationKernel, PropagationKernel]:
    """(inter-layer, defocus) kernels for the acquisition geometry."""
    kernel_dz = make_kernel(geom.grid, geom.dz, geom.k_medium)
    kernel_det = make_kernel(geom.grid, geom.d_defocus, geom.k0)
    return kernel_dz, kernel_det


def bpm_forward(
    stack: ObjectStack,
    geom: AcquisitionGeometry,
    o: Orientation,
    kernels: tuple[PropagationKernel, PropagationKernel] | None = None,
) -> tuple[ComplexField2D, BPMCache]:
    """Multi-slice propagation of the tilted illumination through the stack.

    Returns the detector-plane field together with a cache of every
    intermediate layer field, as needed by the adjoint gradient pass.
    """
    if stack.grid != geom.grid:
        raise ValueError(f"stack grid {stack.grid} != geometry grid {geom.grid}")
    if kernels is None:
        kernels = model_kernels(geom)
    kernel_dz, kernel_det = kernels

    u_inc = incident_field(geom, o)
    u = ComplexField2D(geom.grid, stack.transmittance(0) * u_inc.values)
    u_layers = [u]
    for layer in range(1, stack.n_layers):
        u = propagate(u, kernel_dz)
        u = ComplexField2D(geom.grid, stack.transmittance(layer) * u.values)
        u_layers.append(u)
    u_det = propagate(u, kernel_det)
    cache = BPMCache(u_inc, tuple(u_layers), u_det, kernel_dz, kernel_det)
    return u_det, cache


def detect_intensity(u_det: ComplexField2D, geom: AcquisitionGeometry) -> np.ndarray:
    """Squared modulus scaled to detector counts.

    The incident beam has unit amplitude, so the no-object reference field has
    unit mean intensity; scaling by the photon flux makes the mean no-object
    count equal ``photon_flux``.
    """
    return geom.photon_flux * u_det.intensity()


def apply_noise(
    img: np.ndarray, geom: AcquisitionGeometry, rng: np.random.Generator
) -> np.ndarray:
    """Per-pixel Poisson shot noise followed by additive Gaussian read noise.

    Negative post-read-noise values are kept unless ``geom.clip_negative`` is
    set, since the data-fidelity cost is defined on real-valued measurements.
    """
    img = np.asarray(img, dtype=np.float64)
    if np.any(img < 0):
        raise ValueError("negative intensities cannot be Poisson-sampled")
    out = rng.poisson(img).astype(np.float64)
    out += rng.normal(geom.read_mean, geom.read_sigma, size=img.shape)
    if geom.clip_negative:
        out = np.maximum(out, 0.0)
    return out


def default_orientations(n_views: int = 22, max_deg: float = 10.0) -> tuple[Orientation, ...]:
    """The two-axis tilt series: a theta_x sweep then a theta_y sweep.

    With 22 views this is theta_x in {-10, -8, ..., +10} at theta_y = 0
    followed by theta_y in {-10, ..., +10} at theta_x = 0; the duplicate
    (0, 0) view is retained to keep the count.
    """
    if n_views < 2 or n_views % 2:
        raise ValueError(f"n_views must be a positive even number, got {n_views}")
    per_axis = n_views // 2
    angles = np.linspace(-max_deg, max_deg, per_axis)
    views = [Orientation(float(a), 0.0) for a in angles]
    views += [Orientation(0.0, float(a)) for a in angles]
    return tuple(views)


def simulate_measurements(
    stack: ObjectStack,
    geom: AcquisitionGeometry,
    orientations: tuple[Orientation, ...],
    noise: bool = True,
    seed: int | None = None,
    threads: int = 1,
) -> MeasurementSet:
    """Simulate one tomographic acquisition.

    Each view gets its own deterministic noise substream derived from
    ``seed``, so the result is identical whether views are evaluated
    sequentially or in parallel.
    """
    orientations = tuple(orientations)
    n_views = len(orientations)
    images = np.zeros((n_views,) + geom.grid.shape)
    if n_views == 0:
        return MeasurementSet(geom, orientations, images)

    kernels = model_kernels(geom)
    if noise:
        streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_views)]
    else:
        streams = [None] * n_views

    def one_view(i: int) -> np.ndarray:
        u_det, _ = bpm_forward(stack, geom, orientations[i], kernels)
        img = detect_intensity(u_det, geom)
        if streams[i] is not None:
            img = apply_noise(img, geom, streams[i])
        return img

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i, img in enumerate(pool.map(one_view, range(n_views))):
                images[i] = img
    else:
        for i in range(n_views):
            images[i] = one_view(i)
    return MeasurementSet(geom, orientations, images)


def fresnel_number(a: float, wavelength: float, d: float) -> float:
    """Diffraction-strength parameter a^2 / (wavelength * d) for feature size a."""
    for name, v in (("feature size", a), ("wavelength", wavelength), ("distance", d)):
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be positive, got {v}")
    return a * a / (wavelength * d)
