"""Command-line surface for the tomography pipeline.

Subcommands cover the full workflow: ``simulate`` (phantom + noisy views),
``approximant`` (fast gradient-descent estimate), ``reconstruct-lt``
(accelerated proximal solver), ``dataset`` (bulk example generation for the
trainer), ``evaluate`` (Pearson score tables), and ``fresnel`` (diffraction
strength diagnostics).

Each command accepts an optional JSON config file plus flag overrides, with
flags winning.  ``--dry-run`` validates the full configuration and prints the
execution plan without touching disk.  Runs are deterministic for a fixed
``--seed`` with ``--threads 1``; the ``DIFFTOMO_THREADS`` environment
variable supplies the thread count when no flag or config value is given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from ._version import __version__
from . import dataio
from .forward import (
    AcquisitionGeometry,
    default_orientations,
    fresnel_number,
    simulate_measurements,
)
from .inverse import SolverConfig, SolverDivergenceError, approximant, lt_reconstruct
from .metrics import affine_calibrate, evaluate, format_percent
from .optics import GridSpec
from .phantom import (
    NOMINAL_ETCHED_PHASE,
    ObjectStack,
    PatternParams,
    load_layer_images,
    synthesize_stack,
)

__all__ = ["main"]

# Display range for phase renders; deliberately wider than the data range.
_PHASE_RANGE = (-0.5, 0.5)


class CliError(Exception):
    """A user-facing failure: bad input, missing file, invalid config."""


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise CliError(f"config file {p} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise CliError(f"config file {p} must hold a JSON object")
    return cfg


def _resolve_threads(args: argparse.Namespace, cfg: dict) -> int:
    if getattr(args, "threads", None) is not None:
        return args.threads
    if "threads" in cfg:
        return int(cfg["threads"])
    env = os.environ.get("DIFFTOMO_THREADS")
    if env is not None:
        try:
            return int(env)
        except ValueError as e:
            raise CliError(f"DIFFTOMO_THREADS must be an integer, got {env!r}") from e
    return os.cpu_count() or 1


def _resolve_seed(args: argparse.Namespace, cfg: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return int(cfg.get("seed", 0))


def _build_geometry(args: argparse.Namespace, cfg: dict) -> AcquisitionGeometry:
    g = dict(cfg.get("geometry", {}))
    for flag, key in (("nx", "nx"), ("ny", "ny"), ("pitch", "pitch"), ("layers", "n_layers")):
        value = getattr(args, flag, None)
        if value is not None:
            g[key] = value
    base = dataio.geometry_to_dict(AcquisitionGeometry())
    unknown = set(g) - set(base)
    if unknown:
        raise CliError(f"unknown geometry keys: {sorted(unknown)}")
    base.update(g)
    try:
        return dataio.geometry_from_dict(base)
    except ValueError as e:
        raise CliError(f"invalid geometry: {e}") from e


def _build_pattern(cfg: dict, seed: int) -> PatternParams:
    p = dict(cfg.get("pattern", {}))
    for key in ("n_features", "width_range", "length_range"):
        if key in p:
            p[key] = tuple(p[key])
    try:
        return PatternParams(seed=seed, **p)
    except (TypeError, ValueError) as e:
        raise CliError(f"invalid pattern parameters: {e}") from e


def _build_solver(
    args: argparse.Namespace, cfg: dict, section: str, defaults: SolverConfig, threads: int
) -> SolverConfig:
    s = dict(cfg.get(section, {}))
    for flag, key in (
        ("k", "n_iters"),
        ("step", "step"),
        ("tv_alpha", "tv_alpha"),
        ("tv_inner", "tv_inner_iters"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            s[key] = value
    if getattr(args, "no_momentum", False):
        s["momentum"] = False
    try:
        return SolverConfig(
            n_iters=int(s.get("n_iters", defaults.n_iters)),
            step=float(s.get("step", defaults.step)),
            tv_alpha=float(s.get("tv_alpha", defaults.tv_alpha)),
            tv_inner_iters=int(s.get("tv_inner_iters", defaults.tv_inner_iters)),
            momentum=bool(s.get("momentum", defaults.momentum)),
            threads=threads,
        )
    except ValueError as e:
        raise CliError(f"invalid solver configuration: {e}") from e


def _render_stack(stack: ObjectStack, out_dir: Path, prefix: str) -> list[Path]:
    renders = out_dir / "renders"
    renders.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(stack.n_layers):
        p = renders / f"{prefix}_layer{i}.png"
        dataio.export_image(stack.phase[i], p, *_PHASE_RANGE)
        paths.append(p)
    return paths


def _emit(args: argparse.Namespace, payload: dict, human_lines: list[str]) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2))
    else:
        for line in human_lines:
            print(line)


def _timed(label: str, fn, *fn_args, **fn_kwargs):
    t0 = time.perf_counter()
    result = fn(*fn_args, **fn_kwargs)
    dt = time.perf_counter() - t0
    print(f"[time] {label}: {dt:.2f} s", file=sys.stderr)
    return result


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    seed = _resolve_seed(args, cfg)
    threads = _resolve_threads(args, cfg)
    geom = _build_geometry(args, cfg)
    out_dir = Path(args.out)

    if args.phantom_dir is not None:
        phantom_dir = Path(args.phantom_dir)
        if not phantom_dir.is_dir():
            raise CliError(f"phantom directory not found: {phantom_dir}")
        image_paths = sorted(
            p for p in phantom_dir.iterdir() if p.suffix.lower() in (".png", ".pgm", ".tif", ".tiff")
        )
        if not image_paths:
            raise CliError(f"no layer images (.png/.pgm/.tif) in {phantom_dir}")
        source = f"phantom images from {phantom_dir}"
    else:
        image_paths = None
        source = "synthetic phantom"

    pattern_seed, noise_seed = (
        int(np.random.default_rng(child).integers(0, 2**31 - 1))
        for child in np.random.SeedSequence(seed).spawn(2)
    )
    plan = [
        f"simulate: {source}",
        f"  geometry: {geom.grid.nx}x{geom.grid.ny} @ {geom.grid.pitch * 1e6:.1f} um, "
        f"{geom.n_layers} layers, defocus {geom.d_defocus * 1e3:.1f} mm",
        f"  views: {args.views}, seed: {seed}, threads: {threads}",
        f"  out: {out_dir}",
    ]
    if args.dry_run:
        print("\n".join(plan))
        return 0

    if image_paths is not None:
        stack = load_layer_images(
            image_paths, NOMINAL_ETCHED_PHASE, geom.grid, geom.dz, allow_resample=True
        )
    else:
        params = _build_pattern(cfg, pattern_seed)
        stack = _timed(
            "synthesize", synthesize_stack, geom.grid, params, geom.n_layers, geom.dz
        )
    orientations = default_orientations(args.views)
    ms = _timed(
        "simulate",
        simulate_measurements,
        stack,
        geom,
        orientations,
        noise=not args.no_noise,
        seed=noise_seed,
        threads=threads,
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    dataio.save_stack(out_dir / "truth.dtom", stack)
    dataio.write_measurement_set(out_dir, ms, extra_meta={"seed": seed})
    _render_stack(stack, out_dir, "truth")
    first_view = ms.images[0]
    dataio.export_image(
        first_view, out_dir / "renders" / "view0.png", float(first_view.min()), float(first_view.max())
    )
    # validate what we just wrote before claiming success
    dataio.read_measurement_set(out_dir)
    dataio.read_array(out_dir / "truth.dtom")
    _emit(
        args,
        {"out": str(out_dir), "views": ms.n_views, "seed": seed},
        [f"wrote {ms.n_views} views and ground truth to {out_dir}"],
    )
    return 0


def _run_solver(args: argparse.Namespace, solver_name: str) -> int:
    cfg = _load_config(args.config)
    threads = _resolve_threads(args, cfg)
    meas_dir = Path(args.meas)
    if not meas_dir.is_dir():
        raise CliError(f"measurement directory not found: {meas_dir}")

    if solver_name == "approximant":
        defaults = SolverConfig(n_iters=8, step=0.05, tv_alpha=0.0, momentum=False)
        section, runner, label = "approximant", approximant, "approximant"
        out_name = "approx.dtom"
    else:
        defaults = SolverConfig(n_iters=30, step=0.05, tv_alpha=0.04, tv_inner_iters=20)
        section, runner, label = "lt", lt_reconstruct, "reconstruct-lt"
        out_name = "lt.dtom"
    solver = _build_solver(args, cfg, section, defaults, threads)
    out_dir = Path(args.out)

    plan = [
        f"{label}: measurements from {meas_dir}",
        f"  iterations: {solver.n_iters}, step: {solver.step}, tv_alpha: {solver.tv_alpha}",
        f"  threads: {threads}",
        f"  out: {out_dir}",
    ]
    if args.dry_run:
        print("\n".join(plan))
        return 0

    ms, _meta = dataio.read_measurement_set(meas_dir)
    geom = ms.geometry
    t0 = time.perf_counter()
    stack, history = runner(ms, geom, solver)
    wall = time.perf_counter() - t0
    print(f"[time] {label}: {wall:.2f} s", file=sys.stderr)
    for i, value in enumerate(history):
        print(f"iter {i:3d}  J = {value:.6e}", file=sys.stderr)

    out_dir.mkdir(parents=True, exist_ok=True)
    dataio.save_stack(out_dir / out_name, stack)
    log = {
        "solver": label,
        "n_iters": solver.n_iters,
        "step": solver.step,
        "tv_alpha": solver.tv_alpha,
        "cost_history": history,
        "wall_time_sec": wall,
    }
    (out_dir / "cost.json").write_text(json.dumps(log, indent=2) + "\n")
    _render_stack(stack, out_dir, out_name.removesuffix(".dtom"))

    payload: dict = {"out": str(out_dir / out_name), "cost_history": history, "wall_time_sec": wall}
    lines = [f"wrote {out_dir / out_name}  (final J = {history[-1]:.6e})"]

    truth_path = meas_dir / "truth.dtom"
    if truth_path.is_file():
        truth = dataio.load_stack(truth_path, geom.dz, geom.grid)
        report = evaluate(stack, truth, cost_history=history, timings={label: wall})
        report.write_json(out_dir / "report.json")
        payload["report"] = report.to_dict()
        lines.append(
            "per-layer PCC%: " + ", ".join(format_percent(v) for v in report.per_layer)
        )
    dataio.read_array(out_dir / out_name)
    _emit(args, payload, lines)
    return 0


def cmd_approximant(args: argparse.Namespace) -> int:
    return _run_solver(args, "approximant")


def cmd_reconstruct_lt(args: argparse.Namespace) -> int:
    return _run_solver(args, "lt")


def cmd_dataset(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    seed = _resolve_seed(args, cfg)
    threads = _resolve_threads(args, cfg)
    geom = _build_geometry(args, cfg)
    try:
        splits = tuple(int(s) for s in args.splits.split(","))
    except ValueError as e:
        raise CliError(f"--splits must be three comma-separated integers: {e}") from e
    if len(splits) != 3:
        raise CliError(f"--splits must have exactly three parts, got {args.splits!r}")
    params = _build_pattern(cfg, seed)
    solver = _build_solver(
        args, cfg, "approximant", SolverConfig(n_iters=1, step=0.1, tv_alpha=0.0, momentum=False), 1
    )
    out_dir = Path(args.out)

    plan = [
        f"dataset: {args.count} examples {splits} -> {out_dir}",
        f"  geometry: {geom.grid.nx}x{geom.grid.ny}, {geom.n_layers} layers, "
        f"views: {args.views}",
        f"  approximant: K={solver.n_iters}, s={solver.step}, tv_alpha={solver.tv_alpha}",
        f"  seed: {seed}, threads: {threads}, force: {args.force}",
    ]
    if args.dry_run:
        print("\n".join(plan))
        return 0

    try:
        manifest = _timed(
            "dataset",
            dataio.generate_dataset,
            args.count,
            splits,
            params,
            geom,
            out_dir,
            seed=seed,
            solver_cfg=solver,
            n_views=args.views,
            force=args.force,
            threads=threads,
        )
    except FileExistsError as e:
        raise CliError(str(e)) from e
    manifest.verify(out_dir)
    _emit(
        args,
        {"out": str(out_dir), "counts": dict(manifest.counts)},
        [f"wrote {manifest.n_examples} examples to {out_dir}  (counts: {manifest.counts})"],
    )
    return 0


def _load_eval_stack(path: Path, role: str) -> np.ndarray:
    if path.is_dir():
        for name in ("approx.dtom", "lt.dtom", "truth.dtom"):
            candidate = path / name
            if candidate.is_file():
                path = candidate
                break
        else:
            raise CliError(f"no stack file found in {role} directory {path}")
    if not path.is_file():
        raise CliError(f"{role} file not found: {path}")
    arr = dataio.read_array(path)
    if arr.ndim != 3:
        raise CliError(f"{role} {path} is rank {arr.ndim}, expected a rank-3 stack")
    return arr


def cmd_evaluate(args: argparse.Namespace) -> int:
    recon_arr = _load_eval_stack(Path(args.recon), "reconstruction")
    truth_arr = _load_eval_stack(Path(args.truth), "truth")
    if recon_arr.shape != truth_arr.shape:
        raise CliError(f"shape mismatch: {recon_arr.shape} vs {truth_arr.shape}")
    grid = GridSpec(recon_arr.shape[2], recon_arr.shape[1], 1e-6)
    recon = ObjectStack(recon_arr, 0.0, grid)
    truth = ObjectStack(truth_arr, 0.0, grid)

    calib = None
    if args.calibrate:
        calib = affine_calibrate(recon_arr, truth_arr)
    try:
        report = evaluate(recon, truth, calib=calib)
    except ValueError as e:
        raise CliError(f"evaluation failed: {e}") from e

    lines = ["layer  PCC%"]
    for i, value in enumerate(report.per_layer):
        lines.append(f"{i:5d}  {format_percent(value)}")
    lines.append(f" mean  {format_percent(report.mean)}")
    if calib is not None:
        lines.append(f"calibration: a = {calib[0]:.6f}, b = {calib[1]:.6f}")
    if args.csv:
        report.write_csv(args.csv)
        lines.append(f"wrote {args.csv}")
    _emit(args, report.to_dict(), lines)
    return 0


def cmd_fresnel(args: argparse.Namespace) -> int:
    value = fresnel_number(args.feature, args.wavelength, args.distance)
    if args.json:
        print(json.dumps({"fresnel_number": value}))
    else:
        print(f"F = {value:.3f}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help="RNG seed (default 0)")
    p.add_argument("--threads", type=_positive_int, help="worker threads")
    p.add_argument("--dry-run", action="store_true", help="validate and print the plan only")
    p.add_argument("--json", action="store_true", help="machine-readable stdout")


def _add_geometry_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nx", type=_positive_int, help="grid width in pixels")
    p.add_argument("--ny", type=_positive_int, help="grid height in pixels")
    p.add_argument("--pitch", type=_positive_float, help="pixel pitch in meters")
    p.add_argument("--layers", type=_positive_int, help="number of object layers")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=_positive_int, help="iteration count")
    p.add_argument("--step", type=_positive_float, help="gradient step size")
    p.add_argument("--tv-alpha", dest="tv_alpha", type=_nonneg_float, help="TV weight")
    p.add_argument("--tv-inner", dest="tv_inner", type=_positive_int, help="TV inner iterations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="difftomo",
        description="Limited-angle multi-layer phase tomography toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"difftomo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize a phantom and its noisy views")
    p.add_argument("--out", required=True, help="output directory")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--synthetic", action="store_true", help="random phantom (default)")
    src.add_argument("--phantom-dir", help="directory of two-level layer images")
    p.add_argument("--views", type=_positive_int, default=22, help="number of views (default 22)")
    p.add_argument("--no-noise", action="store_true", help="skip shot/read noise")
    _add_geometry_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("approximant", help="fast gradient-descent estimate")
    p.add_argument("--meas", required=True, help="measurement directory")
    p.add_argument("--out", required=True, help="output directory")
    _add_solver_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_approximant)

    p = sub.add_parser("reconstruct-lt", help="accelerated proximal reconstruction")
    p.add_argument("--meas", required=True, help="measurement directory")
    p.add_argument("--out", required=True, help="output directory")
    _add_solver_flags(p)
    p.add_argument(
        "--no-momentum",
        action="store_true",
        help="disable acceleration; with --tv-alpha 0 this is plain descent",
    )
    _add_common(p)
    p.set_defaults(func=cmd_reconstruct_lt)

    p = sub.add_parser("dataset", help="generate a training dataset tree")
    p.add_argument("--out", required=True, help="dataset root directory")
    p.add_argument("--count", type=int, default=60, help="total examples (default 60)")
    p.add_argument(
        "--splits", default="50,5,5", help="train,validation,test counts (default 50,5,5)"
    )
    p.add_argument("--views", type=_positive_int, default=22, help="views per example")
    p.add_argument("--force", action="store_true", help="overwrite an existing dataset")
    _add_solver_flags(p)
    _add_geometry_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("evaluate", help="Pearson score table for a reconstruction")
    p.add_argument("--recon", required=True, help="stack file or directory")
    p.add_argument("--truth", required=True, help="stack file or directory")
    p.add_argument("--calibrate", action="store_true", help="affine-calibrate first")
    p.add_argument("--csv", help="also write a CSV table here")
    p.add_argument("--json", action="store_true", help="machine-readable stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fresnel", help="diffraction-strength number for a feature size")
    p.add_argument("--feature", type=_positive_float, required=True, help="feature size in meters")
    p.add_argument(
        "--wavelength", type=_positive_float, default=632.8e-9, help="wavelength in meters"
    )
    p.add_argument(
        "--distance", type=_positive_float, default=58e-3, help="propagation distance in meters"
    )
    p.add_argument("--json", action="store_true", help="machine-readable stdout")
    p.set_defaults(func=cmd_fresnel)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (dataio.FormatError, SolverDivergenceError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
