"""Inference, affine output calibration, and nominal-phase display mapping.

The correlation loss is blind to scale and offset, so a trained network emits
phase maps in an arbitrary affine frame.  A single (a, b) pair fitted by least
squares against synthetic test-split truths maps outputs back into radians;
the pair is constant for a trained network and stored alongside it in JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .dataset import StackPairDataset
from .formats import write_array
from .model import DenseEncoderDecoder

NOMINAL_PATTERN_PHASE = -0.33


def np_pcc(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation over all pixels of two equal-size real maps."""
    af = np.asarray(a, dtype=np.float64).ravel()
    bf = np.asarray(b, dtype=np.float64).ravel()
    if af.size != bf.size:
        raise ValueError(f"size mismatch: {af.size} vs {bf.size}")
    ad = af - af.mean()
    bd = bf - bf.mean()
    den = np.sqrt(np.sum(ad * ad) * np.sum(bd * bd))
    if den == 0.0:
        raise ValueError("constant input: correlation undefined")
    return float(np.sum(ad * bd) / den)


def _score_layer(out: np.ndarray, truth: np.ndarray) -> float:
    """Per-layer PCC, with dead (constant) layers scoring 0.

    A rectified head can emit all-zero channels, especially untrained; the
    correlation is undefined there, and "no correlation" is the honest score
    — the same convention the eps-guarded training loss converges to.
    """
    if np.ptp(out) == 0.0 or np.ptp(truth) == 0.0:
        return 0.0
    return np_pcc(out, truth)


def fit_affine(outputs: list[np.ndarray], truths: list[np.ndarray]) -> tuple[float, float]:
    """Least-squares (a, b) minimizing ||a*out + b - truth||^2 over all pixels."""
    out = np.concatenate([np.asarray(o, dtype=np.float64).ravel() for o in outputs])
    ref = np.concatenate([np.asarray(t, dtype=np.float64).ravel() for t in truths])
    if out.size != ref.size:
        raise ValueError(f"pooled sizes differ: {out.size} vs {ref.size}")
    d = out - out.mean()
    var = float(np.sum(d * d))
    if var == 0.0:
        raise ValueError("cannot calibrate constant outputs")
    a = float(np.sum(d * (ref - ref.mean())) / var)
    b = float(ref.mean() - a * out.mean())
    return a, b


def predict(model: DenseEncoderDecoder, approx: np.ndarray) -> np.ndarray:
    """Forward one (L, H, W) approximant through the network."""
    model.eval()
    with torch.no_grad():
        out = model(torch.from_numpy(approx.astype(np.float32))[None])
    return out[0].numpy().astype(np.float64)


def reassign_nominal(
    stack: np.ndarray, nominal: float = NOMINAL_PATTERN_PHASE
) -> np.ndarray:
    """Snap each layer to the two-level display convention.

    Pixels below the midpoint of a layer's value range become the nominal
    pattern phase; the rest become zero background.  Intended for visual
    comparison only, after calibration.
    """
    out = np.zeros_like(stack)
    for i, layer in enumerate(stack):
        lo, hi = float(layer.min()), float(layer.max())
        if hi == lo:
            continue
        out[i] = np.where(layer < 0.5 * (lo + hi), nominal, 0.0)
    return out


@dataclass(frozen=True)
class InferenceResult:
    example_id: str
    output: np.ndarray  # calibrated (L, H, W) phases
    per_layer_pcc: tuple[float, ...]


def infer_and_calibrate(
    model: DenseEncoderDecoder,
    dataset: StackPairDataset,
    calibration: tuple[float, float] | None = None,
) -> tuple[list[InferenceResult], tuple[float, float]]:
    """Run the network over a split and put outputs into the truth's units.

    When ``calibration`` is None, (a, b) is fitted on this split's truths
    (the synthetic test split, by convention) and then applied; pass a stored
    pair to reuse a fit.  Scores are computed after calibration, which cannot
    change them for positive scale — they are reported for the table.
    """
    raws, truths, ids = [], [], []
    for entry in dataset.entries:
        approx, truth = dataset.load_pair(entry)
        raws.append(predict(model, approx))
        truths.append(truth)
        ids.append(entry.example_id)
    if not raws:
        raise ValueError("empty split: nothing to infer")
    if calibration is None:
        calibration = fit_affine(raws, truths)
    a, b = calibration
    results = []
    for example_id, raw, truth in zip(ids, raws, truths):
        out = a * raw + b
        scores = tuple(_score_layer(out[i], truth[i]) for i in range(out.shape[0]))
        results.append(InferenceResult(example_id, out, scores))
    return results, calibration


def write_results(
    out_dir: str | Path,
    results: list[InferenceResult],
    calibration: tuple[float, float],
    reassign: bool = False,
) -> dict:
    """Persist calibrated stacks plus a JSON summary; returns the summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_layer = np.array([r.per_layer_pcc for r in results])
    for r in results:
        stack = reassign_nominal(r.output) if reassign else r.output
        write_array(out_dir / f"{r.example_id}_dnn.dtom", stack)
    summary = {
        "calibration": {"a": calibration[0], "b": calibration[1]},
        "reassigned_to_nominal": reassign,
        "n_examples": len(results),
        "per_layer_mean_pcc": per_layer.mean(axis=0).tolist(),
        "per_layer_std_pcc": per_layer.std(axis=0).tolist(),
        "mean_pcc": float(per_layer.mean()),
        "examples": {
            r.example_id: list(r.per_layer_pcc) for r in results
        },
    }
    (out_dir / "inference.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary
