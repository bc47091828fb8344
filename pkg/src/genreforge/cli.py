"""Command-line entry point: ``genreforge {preprocess,train,evaluate,predict}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import GenreForgeError
from .network import BLOCK_VARIANTS, NetworkConfig
from .pipeline import (
    SLICES_PER_TRACK,
    evaluate_command,
    predict_command,
    preprocess_command,
    train_command,
)
from .trainer import TrainConfig


def _positions(text):
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated stage numbers, got {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="genreforge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="decode audio, cache spectrograms, index slices")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--augment", action="store_true",
                   help="add overlap and pitch-shift slices for the train split")
    p.add_argument("--slices", type=int, default=SLICES_PER_TRACK)
    p.add_argument("--vocabulary", choices=["gtzan", "fma"], default=None)
    p.add_argument("--resplit", type=int, default=None, metavar="SEED",
                   help="ignore manifest splits; draw a stratified 80/10/10 split")

    p = sub.add_parser("train", help="train the CNN and the stacking SVM")
    p.add_argument("--index", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--kernel", type=int, choices=[3, 4], default=4)
    p.add_argument("--block", choices=BLOCK_VARIANTS, default="basic")
    p.add_argument("--replace", type=_positions, default=(1, 2, 3), metavar="POS[,POS]")
    p.add_argument("--growth", type=int, default=32)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--decay", type=float, default=1e-6)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--svm-c", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="segment/track accuracy and confusion matrix")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--method", choices=["vote", "svm"], default="svm")
    p.add_argument("--json", action="store_true", help="print the report as JSON")

    p = sub.add_parser("predict", help="classify a single WAV file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--audio", required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "preprocess":
            s = preprocess_command(args.manifest, args.out, args.augment, args.slices,
                                   args.vocabulary, args.resplit)
            print(f"tracks_ok={s.tracks_ok} tracks_failed={len(s.failures)} "
                  f"slices={s.slices} index={s.index_path}")
            for path, err in s.failures:
                print(f"failed {path}: {err}")
        elif args.command == "train":
            net_cfg = NetworkConfig(num_classes=args.classes, kernel_size=args.kernel,
                                    block_variant=args.block, replace_positions=args.replace,
                                    growth_rate=args.growth)
            train_cfg = TrainConfig(epochs=args.epochs, seed=args.seed, lr0=args.lr,
                                    decay=args.decay, batch_size=args.batch_size,
                                    l2_lambda=args.l2)
            report, _, svm = train_command(args.index, net_cfg, train_cfg, args.out,
                                           svm_c=args.svm_c)
            print(f"steps={report.steps} best_epoch={report.best_epoch} "
                  f"svm={'yes' if svm is not None else 'no'} checkpoint={args.out}")
        elif args.command == "evaluate":
            r = evaluate_command(args.ckpt, args.index, args.split, args.method)
            if args.json:
                print(json.dumps({
                    "method": r.method, "split": r.split, "labels": list(r.labels),
                    "segment_accuracy": r.segment_accuracy,
                    "track_accuracy": r.track_accuracy,
                    "confusion": r.confusion.tolist(),
                }, sort_keys=True))
            else:
                print(r.format())
        elif args.command == "predict":
            label, scores = predict_command(args.ckpt, args.audio)
            print(f"label={label}")
            for name, score in scores.items():
                print(f"{name}={score:.6f}")
    except (GenreForgeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
