"""Command-line entry point.

Subcommands: generate, train, eval, predict, export-contact. Exit codes
are a stable scripting contract: 0 success, 1 runtime failure, 2 usage
error (bad arguments, missing inputs). GRACE_DATA_DIR provides the default
dataset root wherever --data is accepted.
"""

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset as dataset_io
from .metrics import report_csv, report_text
from .ply import write_contact_ply
from .synthetic import GeneratorConfig, generate_dataset
from .training import ExperimentConfig, evaluate, load_model, setup_determinism, train
from .types import MIN_CLOUD_POINTS


class UsageError(Exception):
    pass


def _data_dir(args) -> Path:
    raw = args.data or os.environ.get("GRACE_DATA_DIR")
    if not raw:
        raise UsageError("no dataset root: pass --data or set GRACE_DATA_DIR")
    path = Path(raw)
    if not path.exists():
        raise UsageError(f"dataset path does not exist: {path}")
    return path


def _parse_image_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise UsageError(f"--image-size must look like 224x224, got {text!r}") from exc
    if h <= 0 or w <= 0:
        raise UsageError("--image-size must be positive")
    return h, w


def cmd_generate(args) -> int:
    if args.points < MIN_CLOUD_POINTS:
        raise UsageError(f"--points must be >= {MIN_CLOUD_POINTS}, got {args.points}")
    if args.num < 1:
        raise UsageError("--num must be >= 1")
    if args.parts < 1:
        raise UsageError("--parts must be >= 1")
    cfg = GeneratorConfig(
        num_parts=args.parts,
        n_points=args.points,
        image_size=_parse_image_size(args.image_size),
    )
    generate_dataset(Path(args.out), args.num, args.seed, cfg,
                     test_fraction=args.test_fraction)
    print(f"wrote {args.num} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg_path = Path(args.config)
    if not cfg_path.exists():
        raise UsageError(f"config file does not exist: {cfg_path}")
    cfg = ExperimentConfig.from_yaml(cfg_path)
    overrides = {}
    if args.data:
        overrides["data_dir"] = args.data
    if args.out:
        overrides["out_dir"] = args.out
    if args.deterministic:
        overrides["deterministic"] = True
    if overrides:
        d = cfg.to_dict()
        d.update(overrides)
        cfg = ExperimentConfig.from_dict(d)
    if not cfg.data_dir:
        env = os.environ.get("GRACE_DATA_DIR")
        if not env:
            raise UsageError("config has no data_dir; pass --data or set GRACE_DATA_DIR")
        d = cfg.to_dict()
        d["data_dir"] = env
        cfg = ExperimentConfig.from_dict(d)
    if not Path(cfg.data_dir).exists():
        raise UsageError(f"dataset path does not exist: {cfg.data_dir}")
    series = train(cfg)
    print(f"final checkpoint: {series.final_checkpoint}")
    if series.report is not None:
        print(report_text(series.report))
    return 0


def cmd_eval(args) -> int:
    data = _data_dir(args)
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise UsageError(f"checkpoint does not exist: {ckpt}")
    report = evaluate(ckpt, data, args.split, threshold=args.threshold,
                      deterministic=args.deterministic)
    csv_text = report_csv(report, legacy_geo_err=args.legacy_geo_err)
    txt = report_text(report, legacy_geo_err=args.legacy_geo_err)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(csv_text)
        (out / "report.txt").write_text(txt)
    print(txt, end="")
    return 0


def cmd_predict(args) -> int:
    image_path = Path(args.image)
    points_path = Path(args.points)
    ckpt = Path(args.checkpoint)
    for p in (image_path, points_path, ckpt):
        if not p.exists():
            raise UsageError(f"input does not exist: {p}")
    from PIL import Image
    image = np.asarray(Image.open(image_path).convert("RGB"), dtype=np.uint8)
    points = dataset_io.read_points(points_path)
    model, cfg = load_model(ckpt)
    setup_determinism(cfg.seed, True)
    pred = model.predict(image, points, threshold=args.threshold)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    probs_path = out_dir / "contact.bin"
    probs_path.write_bytes(np.ascontiguousarray(pred.probs, dtype="<f4").tobytes())
    ply_path = write_contact_ply(out_dir / "contact.ply", points, pred.probs)
    print(f"wrote {probs_path} and {ply_path} ({len(points)} vertices)")
    return 0


def cmd_export_contact(args) -> int:
    points_path = Path(args.points)
    probs_path = Path(args.probs)
    for p in (points_path, probs_path):
        if not p.exists():
            raise UsageError(f"input does not exist: {p}")
    points = dataset_io.read_points(points_path)
    probs = np.frombuffer(probs_path.read_bytes(), dtype="<f4")
    if len(probs) != len(points):
        raise UsageError(
            f"probability count {len(probs)} does not match point count {len(points)}"
        )
    path = write_contact_ply(Path(args.out), points, probs, threshold=args.threshold)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grace",
        description="dense human-scene contact estimation from an image and a point cloud",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic paired dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--num", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parts", type=int, default=24)
    p.add_argument("--image-size", default="224x224")
    p.add_argument("--points", type=int, default=1024)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train from an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--data", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--data", default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--legacy-geo-err", action="store_true",
                   help="include the false-positive-only geo_err column")
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--out", default=None, help="directory for report.csv / report.txt")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict contact for one image + point cloud")
    p.add_argument("--image", required=True)
    p.add_argument("--points", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("export-contact", help="write a colored PLY from saved probabilities")
    p.add_argument("--points", required=True)
    p.add_argument("--probs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_export_contact)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
