"""DenseNet trainer for multi-layer phase tomography reconstruction.

Consumes datasets produced by the tomography engine purely through their
on-disk formats (raw arrays plus a JSON manifest) and trains an
encoder-decoder to map crude gradient-descent approximants to ground-truth
phase stacks under a negative-correlation loss.
"""

from .config import TrainConfig
from .dataset import StackPairDataset, open_split
from .formats import FormatError, Manifest, ManifestEntry, load_manifest, read_array, write_array
from .infer import (
    NOMINAL_PATTERN_PHASE,
    InferenceResult,
    fit_affine,
    infer_and_calibrate,
    np_pcc,
    predict,
    reassign_nominal,
    write_results,
)
from .loss import npcc_loss, pcc
from .model import DenseEncoderDecoder, build_model, parameter_count
from .train import EpochRecord, TrainingDivergedError, load_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "TrainConfig",
    "StackPairDataset",
    "open_split",
    "FormatError",
    "Manifest",
    "ManifestEntry",
    "load_manifest",
    "read_array",
    "write_array",
    "NOMINAL_PATTERN_PHASE",
    "InferenceResult",
    "fit_affine",
    "infer_and_calibrate",
    "np_pcc",
    "predict",
    "reassign_nominal",
    "write_results",
    "npcc_loss",
    "pcc",
    "DenseEncoderDecoder",
    "build_model",
    "parameter_count",
    "EpochRecord",
    "TrainingDivergedError",
    "load_checkpoint",
    "train",
    "__version__",
]
