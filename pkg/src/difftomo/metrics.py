"""Reconstruction quality metrics and report serialization.

The headline figure of merit is the Pearson correlation coefficient between a
reconstructed phase layer and the ground-truth layer; it is invariant to any
positive affine transform of either argument, which matters because phase
estimates routinely carry an unknown global offset and scale.  A least-squares
affine calibration utility recovers that (scale, offset) pair when absolute
values are needed for display or thresholding — it never changes the PCC.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .phantom import ObjectStack

__all__ = [
    "pcc",
    "npcc",
    "affine_calibrate",
    "evaluate",
    "summarize_reports",
    "format_percent",
    "ReconstructionReport",
]


def pcc(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation of two equal-shape arrays, flattened.

    Raises ``ValueError`` if either input is constant (zero variance), where
    the coefficient is undefined.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ValueError("need at least two samples for a correlation")
    da = a - a.mean()
    db = b - b.mean()
    na = float(np.sqrt(np.sum(da * da)))
    nb = float(np.sqrt(np.sum(db * db)))
    if na == 0.0 or nb == 0.0:
        raise ValueError("correlation undefined for a constant input")
    return float(np.sum(da * db) / (na * nb))


def npcc(a: np.ndarray, b: np.ndarray) -> float:
    """Negative Pearson correlation; -1 means perfect agreement."""
    return -pcc(a, b)


def _pool(maps: np.ndarray | Sequence[np.ndarray]) -> np.ndarray:
    if isinstance(maps, np.ndarray):
        return maps.astype(np.float64, copy=False).ravel()
    return np.concatenate([np.asarray(m, dtype=np.float64).ravel() for m in maps])


def affine_calibrate(
    outputs: np.ndarray | Sequence[np.ndarray],
    truths: np.ndarray | Sequence[np.ndarray],
) -> tuple[float, float]:
    """Least-squares (a, b) minimizing ||a*outputs + b - truths||^2, pooled.

    Accepts single arrays or sequences of arrays; all pixels are pooled into
    one regression.  Constant (zero-variance) outputs raise ``ValueError``
    since the scale is then unidentifiable.
    """
    out = _pool(outputs)
    ref = _pool(truths)
    if out.shape != ref.shape:
        raise ValueError(f"pooled sizes differ: {out.size} vs {ref.size}")
    d = out - out.mean()
    var = float(np.sum(d * d))
    if var == 0.0:
        raise ValueError("cannot calibrate constant outputs")
    a = float(np.sum(d * (ref - ref.mean())) / var)
    b = float(ref.mean() - a * out.mean())
    return a, b


def affine_calibrate_per_layer(
    outputs: np.ndarray | Sequence[np.ndarray],
    truths: np.ndarray | Sequence[np.ndarray],
) -> tuple[tuple[float, float], ...]:
    """One (a, b) regression per layer index instead of a single pooled fit.

    Inputs are layer stacks shaped (L, ny, nx), or sequences of such stacks;
    pixels are pooled across examples within each layer.
    """
    out_stacks = [outputs] if isinstance(outputs, np.ndarray) else list(outputs)
    ref_stacks = [truths] if isinstance(truths, np.ndarray) else list(truths)
    if len(out_stacks) != len(ref_stacks) or not out_stacks:
        raise ValueError("need equal, nonzero counts of output and truth stacks")
    n_layers = np.asarray(out_stacks[0]).shape[0]
    for s in out_stacks + ref_stacks:
        if np.asarray(s).ndim < 3 or np.asarray(s).shape[0] != n_layers:
            raise ValueError("per-layer calibration needs (L, ny, nx) stacks")
    return tuple(
        affine_calibrate(
            [np.asarray(s)[layer] for s in out_stacks],
            [np.asarray(s)[layer] for s in ref_stacks],
        )
        for layer in range(n_layers)
    )


def format_percent(value: float) -> str:
    """PCC fraction rendered as a percent with one decimal, e.g. 94.2."""
    return f"{100.0 * value:.1f}"


@dataclass(frozen=True)
class ReconstructionReport:
    """Per-layer PCC for one reconstruction, exportable as JSON or CSV.

    Scores are stored as fractions in [-1, 1]; serialization also renders the
    "x100" percent form.  Optional fields carry the solver cost history and
    per-stage wall-clock timings alongside the scores.
    """

    per_layer: tuple[float, ...]
    mean: float
    calibration: tuple[float, float] | None = None
    cost_history: tuple[float, ...] | None = None
    timings: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        tol = 1e-9
        for value in self.per_layer + (self.mean,):
            if not (-1.0 - tol <= value <= 1.0 + tol):
                raise ValueError(f"PCC {value} outside [-1, 1]")
        for stage, seconds in self.timings.items():
            if seconds < 0:
                raise ValueError(f"negative timing for stage {stage!r}: {seconds}")

    @property
    def n_layers(self) -> int:
        return len(self.per_layer)

    def to_dict(self) -> dict:
        payload = {
            "per_layer_pcc": list(self.per_layer),
            "per_layer_pcc_percent": [format_percent(v) for v in self.per_layer],
            "mean_pcc": self.mean,
            "mean_pcc_percent": format_percent(self.mean),
        }
        if self.calibration is not None:
            payload["calibration"] = {"a": self.calibration[0], "b": self.calibration[1]}
        if self.cost_history is not None:
            payload["cost_history"] = list(self.cost_history)
        if self.timings:
            payload["timings_sec"] = dict(self.timings)
        return payload

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["layer", "pcc", "pcc_percent"])
            for i, value in enumerate(self.per_layer):
                writer.writerow([i, f"{value:.6f}", format_percent(value)])
            writer.writerow(["mean", f"{self.mean:.6f}", format_percent(self.mean)])


def evaluate(
    recon: ObjectStack,
    truth: ObjectStack,
    calib: tuple[float, float] | None = None,
    cost_history: Sequence[float] | None = None,
    timings: dict[str, float] | None = None,
) -> ReconstructionReport:
    """Layer-wise PCC of a reconstruction against ground truth.

    When ``calib`` is given, the estimate is mapped through ``a*x + b`` before
    scoring; for positive ``a`` this leaves every PCC unchanged.
    """
    if recon.phase.shape != truth.phase.shape:
        raise ValueError(
            f"layer stacks differ in shape: {recon.phase.shape} vs {truth.phase.shape}"
        )
    estimate = recon.phase
    if calib is not None:
        estimate = calib[0] * estimate + calib[1]
    per_layer = tuple(pcc(estimate[i], truth.phase[i]) for i in range(recon.n_layers))
    return ReconstructionReport(
        per_layer=per_layer,
        mean=float(np.mean(per_layer)),
        calibration=calib,
        cost_history=None if cost_history is None else tuple(cost_history),
        timings={} if timings is None else dict(timings),
    )


def summarize_reports(reports: Sequence[ReconstructionReport]) -> dict:
    """Mean and standard deviation of PCC across a set of reports.

    Per-layer statistics require every report to cover the same number of
    layers.
    """
    if not reports:
        raise ValueError("no reports to summarize")
    n_layers = reports[0].n_layers
    if any(r.n_layers != n_layers for r in reports):
        raise ValueError("reports cover differing layer counts")
    per_layer = np.array([r.per_layer for r in reports])  # (n_reports, L)
    means = per_layer.mean(axis=0)
    stds = per_layer.std(axis=0)
    overall = np.array([r.mean for r in reports])
    return {
        "n_examples": len(reports),
        "per_layer_mean_pcc": means.tolist(),
        "per_layer_std_pcc": stds.tolist(),
        "per_layer_mean_pcc_percent": [format_percent(v) for v in means],
        "mean_pcc": float(overall.mean()),
        "std_pcc": float(overall.std()),
        "mean_pcc_percent": format_percent(float(overall.mean())),
    }
