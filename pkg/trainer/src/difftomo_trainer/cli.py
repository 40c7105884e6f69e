"""Command-line entry points: ``train`` and ``infer``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import TrainConfig
from .dataset import open_split
from .infer import infer_and_calibrate, write_results
from .train import TrainingDivergedError, load_checkpoint, train


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return n


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="difftomo-trainer",
        description="DenseNet trainer for multi-layer phase reconstruction.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a dataset manifest")
    p.add_argument("--manifest", required=True, help="path to manifest.json")
    p.add_argument("--out", required=True, help="run directory for checkpoints/logs")
    p.add_argument("--epochs", type=_positive_int, default=20)
    p.add_argument("--batch-size", type=_positive_int, default=16)
    p.add_argument("--dense-blocks", type=_positive_int, default=3)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--input-offset", action="store_true",
                   help="shift approximants to nonnegative values")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run a checkpoint over a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test",
                   choices=("train", "validation", "test"))
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--calibration", help="reuse a stored calibration JSON")
    p.add_argument("--reassign-nominal", action="store_true",
                   help="snap outputs to the two-level display convention")
    p.add_argument("--input-offset", action="store_true")
    p.add_argument("--dense-blocks", type=_positive_int, default=3)
    p.set_defaults(func=cmd_infer)
    return ap


def cmd_train(args: argparse.Namespace) -> int:
    cfg = TrainConfig(
        manifest=args.manifest,
        epochs=args.epochs,
        batch_size=args.batch_size,
        dense_blocks=args.dense_blocks,
        learning_rate=args.lr,
        seed=args.seed,
        input_offset=args.input_offset,
        out_dir=args.out,
    )
    _, history = train(cfg)
    last = history[-1]
    val = "n/a" if last.val_npcc is None else f"{last.val_npcc:.4f}"
    print(f"trained {len(history)} epochs: "
          f"train NPCC {last.train_npcc:.4f}, validation NPCC {val}")
    print(f"artifacts in {args.out}")
    return 0


def cmd_infer(args: argparse.Namespace) -> int:
    cfg = TrainConfig(
        manifest=args.manifest,
        dense_blocks=args.dense_blocks,
        input_offset=args.input_offset,
        out_dir=args.out,
    )
    model = load_checkpoint(args.checkpoint, cfg)
    dataset = open_split(args.manifest, args.split, args.input_offset)
    calibration = None
    if args.calibration:
        record = json.loads(Path(args.calibration).read_text())
        calibration = (record["calibration"]["a"], record["calibration"]["b"])
    results, calibration = infer_and_calibrate(model, dataset, calibration)
    summary = write_results(args.out, results, calibration, args.reassign_nominal)
    print(f"{len(results)} examples, mean PCC {summary['mean_pcc']:.4f}, "
          f"calibration a={calibration[0]:.4f} b={calibration[1]:.4f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, TrainingDivergedError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
