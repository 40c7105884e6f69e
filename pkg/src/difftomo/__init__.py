"""Limited-angle multi-layer phase tomography with a multi-slice beam model.

The package simulates coherent imaging of a stack of thin phase layers under
a two-axis tilt series, reconstructs the layers from noisy defocused
intensity images by adjoint-gradient descent (with an optional accelerated
total-variation proximal solver), scores reconstructions by Pearson
correlation, and generates reproducible synthetic datasets for downstream
learning.
"""

from ._version import __version__
from .optics import (
    ComplexField2D,
    GridSpec,
    PropagationKernel,
    adjoint_propagate,
    make_kernel,
    propagate,
)
from .phantom import (
    NOMINAL_ETCHED_PHASE,
    ObjectStack,
    PatternParams,
    load_layer_images,
    phase_from_depth,
    refractive_index_map,
    synthesize_layer,
    synthesize_stack,
)
from .forward import (
    GLASS_INDEX,
    OIL_INDEX,
    AcquisitionGeometry,
    BPMCache,
    MeasurementSet,
    Orientation,
    apply_noise,
    bpm_forward,
    default_orientations,
    detect_intensity,
    fresnel_number,
    incident_field,
    model_kernels,
    simulate_measurements,
)
from .inverse import (
    GradientStack,
    SolverConfig,
    SolverDivergenceError,
    approximant,
    cost,
    gradient_single_view,
    lt_reconstruct,
    total_gradient,
    tv_prox,
    tv_prox_2d,
)
from .metrics import (
    ReconstructionReport,
    affine_calibrate,
    affine_calibrate_per_layer,
    evaluate,
    format_percent,
    npcc,
    pcc,
    summarize_reports,
)
from .dataio import (
    DatasetManifest,
    ExampleEntry,
    FormatError,
    generate_dataset,
    load_manifest,
    read_array,
    write_array,
)

__all__ = [
    "__version__",
    # optics
    "GridSpec",
    "ComplexField2D",
    "PropagationKernel",
    "make_kernel",
    "propagate",
    "adjoint_propagate",
    # phantom
    "ObjectStack",
    "PatternParams",
    "NOMINAL_ETCHED_PHASE",
    "OIL_INDEX",
    "GLASS_INDEX",
    "phase_from_depth",
    "synthesize_layer",
    "synthesize_stack",
    "refractive_index_map",
    "load_layer_images",
    # forward
    "AcquisitionGeometry",
    "Orientation",
    "MeasurementSet",
    "BPMCache",
    "incident_field",
    "model_kernels",
    "bpm_forward",
    "detect_intensity",
    "apply_noise",
    "default_orientations",
    "simulate_measurements",
    "fresnel_number",
    # inverse
    "SolverConfig",
    "GradientStack",
    "SolverDivergenceError",
    "cost",
    "gradient_single_view",
    "total_gradient",
    "approximant",
    "tv_prox",
    "tv_prox_2d",
    "lt_reconstruct",
    # metrics
    "pcc",
    "npcc",
    "affine_calibrate",
    "affine_calibrate_per_layer",
    "evaluate",
    "summarize_reports",
    "format_percent",
    "ReconstructionReport",
    # dataio
    "write_array",
    "read_array",
    "FormatError",
    "DatasetManifest",
    "ExampleEntry",
    "load_manifest",
    "generate_dataset",
]
