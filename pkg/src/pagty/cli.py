"""Command-line surface: train, eval, predict, ablate, gen-synthetic, verify.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure during training.  ``PAGTY_DEVICE`` overrides the configured device.
"""

import argparse
import logging
import sys
from pathlib import Path

from .configio import dump_configs, load_configs
from .data import SyntheticSpec, generate_synthetic, scan_dataset
from .errors import ConfigError, DataError, NumericError, ShapeError
from .metrics import report_to_text
from .training import TrainConfig, evaluate, predict, run_ablation, train


def _common(parser: argparse.ArgumentParser, config=False, data=False):
    if config:
        parser.add_argument("--config", required=True, help="JSON config file")
    if data:
        parser.add_argument("--data", required=True, help="dataset root (images/ + masks/)")
    parser.add_argument("--out-dir", default="runs", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--workers", type=int, default=None, help="data loader workers")


def _apply_overrides(train_config: TrainConfig, args) -> TrainConfig:
    if getattr(args, "seed", None) is not None:
        train_config.seed = args.seed
    if getattr(args, "workers", None) is not None:
        train_config.workers = args.workers
    return train_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pagty", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    _common(p, config=True, data=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _common(p, data=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scheme", default="mean_per_image")

    p = sub.add_parser("predict", help="segment one image")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)

    p = sub.add_parser("ablate", help="run the four branch-ablation rows")
    _common(p, config=True, data=True)

    p = sub.add_parser("gen-synthetic", help="write a synthetic shapes dataset")
    p.add_argument("--out-dir", default="synthetic")
    p.add_argument("--n-images", type=int, default=20)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--overwrite", action="store_true")

    p = sub.add_parser("verify", help="run the invariant self-checks")

    p = sub.add_parser("show-config", help="print the resolved canonical config")
    p.add_argument("--config", required=True)

    return parser


def _run(args) -> int:
    if args.command == "train":
        model_config, train_config = load_configs(args.config)
        train_config = _apply_overrides(train_config, args)
        records = scan_dataset(args.data)
        result = train(model_config, train_config, records, out_dir=args.out_dir)
        last = result.history[-1]
        print(
            f"trained {len(result.history)} epochs; final loss {last['train_loss']:.4f}; "
            f"best val dsc {result.best_val_dsc:.4f}"
        )
        print(f"checkpoints: {result.best_checkpoint} {result.last_checkpoint}")
        return 0

    if args.command == "eval":
        records = scan_dataset(args.data)
        report = evaluate(args.checkpoint, records, scheme=args.scheme, out_dir=args.out_dir)
        print(report_to_text(report), end="")
        return 0

    if args.command == "predict":
        mask_path, overlay_path = predict(args.checkpoint, args.image, args.out_dir)
        print(f"wrote {mask_path} and {overlay_path}")
        return 0

    if args.command == "ablate":
        model_config, train_config = load_configs(args.config)
        train_config = _apply_overrides(train_config, args)
        records = scan_dataset(args.data)
        rows = run_ablation(model_config, train_config, records, out_dir=args.out_dir)
        for row in rows:
            print(
                f"{row['label']:<22} params {row['params']:>10} "
                f"dsc {row['dsc']:.4f} hd95 {row['hd95']:.4f}"
            )
        return 0

    if args.command == "gen-synthetic":
        spec = SyntheticSpec(
            n_images=args.n_images,
            image_size=(args.size, args.size),
            classes=args.classes,
            seed=args.seed,
        )
        out = generate_synthetic(spec, args.out_dir, overwrite=args.overwrite)
        print(f"wrote {spec.n_images} images to {out}")
        return 0

    if args.command == "verify":
        from .verify import run_verification

        return 1 if run_verification() else 0

    if args.command == "show-config":
        model_config, train_config = load_configs(args.config)
        print(dump_configs(model_config, train_config), end="")
        return 0

    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, ShapeError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
