"""Command-line entry point.

Exit status is 0 on success, 1 when a command fails and 2 on a usage error.
Training settings come from built-in defaults, then an optional JSON config
file (flat keys), then command-line flags, later sources winning.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io
from .analysis import conditional_entropy, dataset_stats, label_pair_counts
from .model import ModelConfig, init_params

MODEL_KEYS = ("hidden", "layers", "attention_hidden")
MODEL_DEFAULTS = {"hidden": 16, "layers": 3, "attention_hidden": None}


class UsageError(Exception):
    pass


def _banner(command: str, config: dict) -> None:
    print(f"goalloc {command} config: " + json.dumps(config, sort_keys=True), flush=True)


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such file: {path}")
    return p


# ------------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    from .synthetic import SyntheticSpec, oracle_params, synth_generate, write_dataset

    spec = SyntheticSpec(num_videos=args.num_videos, l_range=(args.min_clips, args.max_clips), d=args.dim,
                         n_goal_classes=args.goal_classes, n_unint_classes=args.unint_classes,
                         transition_fraction_range=(args.min_transition, args.max_transition),
                         cluster_noise_sigma=args.sigma, test_fraction=args.test_fraction, seed=args.seed)
    _banner("synth", {"out": args.out, **{f.name: getattr(spec, f.name) for f in fields(spec)}})
    ds = synth_generate(spec)
    path = write_dataset(ds, args.out)
    if args.oracle_checkpoint:
        io.save_checkpoint(args.oracle_checkpoint, oracle_params(ds.goal_prototypes, ds.unint_prototypes))
    print(f"wrote {len(ds.videos)} videos to {path}")
    return 0


# ------------------------------------------------------------------- train

TRAIN_FLAGS = {
    "learning_rate": float, "batch_size": int, "iterations": int, "s": int, "p": float, "q": float,
    "lambda_weight": float, "activation_threshold": float, "checkpoint_every": int,
    "hidden": int, "layers": int, "attention_hidden": int,
}


def resolve_train_config(args) -> tuple[dict, dict]:
    from .train import TrainConfig

    merged: dict = {f.name: f.default for f in fields(TrainConfig)}
    merged.update(MODEL_DEFAULTS)
    if args.config:
        doc = json.loads(_existing(args.config).read_text())
        if not isinstance(doc, dict):
            raise UsageError(f"{args.config}: config must be a JSON object")
        unknown = set(doc) - set(merged)
        if unknown:
            raise UsageError(f"{args.config}: unknown config keys {sorted(unknown)}")
        merged.update(doc)
    for key in TRAIN_FLAGS:
        value = getattr(args, key)
        if value is not None:
            merged[key] = value
    if args.seed is not None:
        merged["seed"] = args.seed
    if args.literal_eq5:
        merged["literal_eq5"] = True
    model = {k: merged.pop(k) for k in MODEL_KEYS}
    return merged, model


def cmd_train(args) -> int:
    from .losses import LabelVector
    from .train import TrainConfig, train

    manifest_path = _existing(args.manifest)
    train_cfg, model_cfg = resolve_train_config(args)
    _banner("train", {"manifest": str(manifest_path), "out": args.out, **train_cfg, **model_cfg})
    config = TrainConfig(**train_cfg)
    manifest = io.load_manifest(manifest_path)
    rows = manifest.split("train")
    if not rows:
        raise ValueError(f"{manifest_path}: no training videos")
    data = [(manifest.load_features(v), LabelVector(v.goal_label, v.unint_label)) for v in rows]
    cfg = ModelConfig(feature_dim=data[0][0].shape[1], n_goal=len(manifest.goal_classes),
                      n_unint=len(manifest.unint_classes), **model_cfg)
    params = init_params(cfg, config.seed)
    report_every = max(1, config.iterations // 20)

    def progress(row):
        if row["iter"] % report_every == 0:
            print(f"iter {row['iter']:6d}  total {row['total']:.6f}", flush=True)

    start = time.perf_counter()
    train(data, params, config, out_dir=args.out, on_step=progress)
    print(f"trained {config.iterations} iterations in {time.perf_counter() - start:.1f} s; "
          f"checkpoint {Path(args.out) / f'ckpt_{config.iterations}.json'}")
    return 0


# ------------------------------------------------------------- eval/localize

def _load_split(manifest, split):
    rows = manifest.split(split)
    if not rows:
        raise ValueError(f"manifest has no {split!r} videos")
    return rows, [(v.id, manifest.load_features(v)) for v in rows]


def _predict(args, manifest):
    from .pipeline import predict_many

    params, hyper = io.load_checkpoint(_existing(args.ckpt))
    s = int(hyper.get("s", 3))
    rows, items = _load_split(manifest, args.split)
    preds = predict_many(params, items, s=s, seg_threshold=args.seg_threshold, threads=args.threads)
    return rows, preds


def cmd_localize(args) -> int:
    manifest = io.load_manifest(_existing(args.manifest))
    _banner("localize", {"manifest": args.manifest, "ckpt": args.ckpt, "out": args.out, "split": args.split,
                         "seg_threshold": args.seg_threshold, "threads": args.threads})
    _, preds = _predict(args, manifest)
    io.write_predictions(args.out, preds)
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .pipeline import evaluate
    from .synthetic import ground_truth

    manifest = io.load_manifest(_existing(args.manifest))
    _banner("eval", {"manifest": args.manifest, "ckpt": args.ckpt, "out": args.out, "split": args.split,
                     "seg_threshold": args.seg_threshold, "threads": args.threads})
    manifest.require_transitions(args.split)
    rows, preds = _predict(args, manifest)
    goal_gts, unint_gts = ground_truth(rows)
    table = evaluate(preds, rows, goal_gts, unint_gts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "metrics.json", table.to_dict())
    io.write_csv(out / "metrics.csv", table.csv_rows())
    io.write_predictions(out / "predictions.jsonl", preds)
    print(f"{'IoU':>5} {'goal':>8} {'unint':>8}")
    for thr, g, u in zip(table.thresholds, table.goal, table.unint):
        print(f"{thr:5.1f} {100 * g:8.2f} {100 * u:8.2f}")
    print(f"{'AVG':>5} {100 * table.goal_avg:8.2f} {100 * table.unint_avg:8.2f}")
    print(f"cMAP  {100 * table.goal_cmap:8.2f} {100 * table.unint_cmap:8.2f}")
    return 0


# -------------------------------------------------------------------- pose

def cmd_pose(args) -> int:
    from .pose import fuse_with_rgb, pose_features

    _banner("pose", {"keypoints": args.keypoints, "out": args.out, "rgb": args.rgb})
    video_id, num_frames, tracks = io.load_keypoints(_existing(args.keypoints))
    chunks = pose_features(tracks, num_frames)
    if args.rgb:
        chunks = fuse_with_rgb(io.read_feature_file(_existing(args.rgb)), chunks)
    io.write_feature_file(args.out, chunks)
    print(f"{video_id or args.keypoints}: {chunks.shape[0]} clips x {chunks.shape[1]} dims -> {args.out}")
    return 0


# ------------------------------------------------------------------- stats

def cmd_stats(args) -> int:
    manifest = io.load_manifest(_existing(args.manifest))
    _banner("stats", {"manifest": args.manifest, "out": args.out})
    stats = dataset_stats(manifest)
    entropy = conditional_entropy(label_pair_counts(manifest))
    print(f"train {stats.split_counts.get('train', 0)}  test {stats.split_counts.get('test', 0)}")
    print(f"H(unint | goal) = {entropy.weighted_mean:.4f} bits (weighted mean over goal classes)")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        doc = stats.to_dict()
        doc["entropy_bits"] = {"per_goal": {manifest.goal_classes[g]: h for g, h in entropy.per_goal.items()},
                               "weighted_mean": entropy.weighted_mean}
        io.write_json(out / "stats.json", doc)
        io.write_csv(out / "segment_fractions.csv", stats.csv_rows())
        io.write_csv(out / "entropy.csv", [["goal_class", "entropy_bits"]] +
                     [[manifest.goal_classes[g], repr(h)] for g, h in entropy.per_goal.items()])
    return 0


# --------------------------------------------------------------- gradcheck

def cmd_gradcheck(args) -> int:
    from .gradcheck import check_total_loss

    lengths = [int(v) for v in args.lengths.split(",")]
    cfg = {"seeds": args.seeds, "lengths": lengths, "hidden": args.hidden, "layers": args.layers,
           "tolerance": args.tolerance, "literal_eq5": args.literal_eq5}
    _banner("gradcheck", cfg)
    worst = 0.0
    for seed in range(args.seeds):
        for l in lengths:
            err = check_total_loss(seed, l, hidden=args.hidden, layers=args.layers, literal_eq5=args.literal_eq5)
            worst = max(worst, err)
            status = "ok" if err < args.tolerance else "FAIL"
            print(f"seed {seed} l {l:3d}  max rel err {err:.3e}  {status}", flush=True)
    print(f"worst {worst:.3e} (tolerance {args.tolerance:g})")
    return 0 if worst < args.tolerance else 1


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="goalloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--num-videos", type=int, default=200)
    p.add_argument("--min-clips", type=int, default=16)
    p.add_argument("--max-clips", type=int, default=32)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--goal-classes", type=int, default=4)
    p.add_argument("--unint-classes", type=int, default=3)
    p.add_argument("--min-transition", type=float, default=0.3)
    p.add_argument("--max-transition", type=float, default=0.7)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle-checkpoint", help="also write hand-set weights that detect the prototypes")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on the train split of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON file with flat TrainConfig and model keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--literal-eq5", action="store_true",
                   help="use l/q instead of 1/q as the ordering margin")
    for key, kind in TRAIN_FLAGS.items():
        p.add_argument("--" + key.replace("_", "-"), type=kind, dest=key)
    p.set_defaults(func=cmd_train)

    for name, func, help_text in (("eval", cmd_eval, "score a checkpoint against transition ground truth"),
                                  ("localize", cmd_localize, "write per-video segment predictions")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--manifest", required=True)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--split", default="test", choices=("train", "test"))
        p.add_argument("--seg-threshold", type=float, default=0.2)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=0, help="accepted for uniformity; evaluation is deterministic")
        p.set_defaults(func=func)

    p = sub.add_parser("pose", help="skeleton features from a keypoint JSON file")
    p.add_argument("--keypoints", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rgb", help="feature file to fuse the skeleton chunks onto")
    p.set_defaults(func=cmd_pose)

    p = sub.add_parser("stats", help="split sizes, segment-length histograms and label entropy")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full training loss")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--lengths", default="4,9,17")
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--literal-eq5", action="store_true")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"goalloc {args.command}: error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - report any failure as exit 1
        print(f"goalloc {args.command}: error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
