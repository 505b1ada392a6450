"""Command-line entry points: `gvl train|eval|experiment` and `datagen`."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
import torch

from .config import load_config, load_gen_config
from .datagen import generate_corpus, load_corpus, save_corpus
from .experiments import EXPERIMENT_MODES, evaluate_tasks, run_experiment
from .metrics import random_proposal_baseline
from .model import GroundedModel, load_checkpoint
from .trainer import train


def datagen_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="datagen", description="Generate a synthetic untrimmed-video corpus."
    )
    parser.add_argument("--config", required=True, help="YAML config (gen section or bare)")
    parser.add_argument("--out", required=True, help="output directory for train/val/test .npz")
    args = parser.parse_args(argv)
    cfg = load_gen_config(args.config)
    paths = save_corpus(generate_corpus(cfg), args.out)
    for name, path in paths.items():
        print(f"wrote {name}: {path}")
    return 0


def _load_corpus_for(args, gen_cfg):
    if args.data:
        return load_corpus(args.data)
    return generate_corpus(gen_cfg)


def _cmd_train(args) -> int:
    cfgs = load_config(args.config)
    train_cfg = cfgs["train"]
    if args.seed is not None:
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    corpus = _load_corpus_for(args, cfgs["gen"])
    torch.manual_seed(train_cfg.seed)
    model = GroundedModel(cfgs["model"])
    out_dir = Path(args.out)
    report = train(
        corpus,
        model,
        train_cfg,
        out_dir=out_dir,
        match_debug_path=(out_dir / "matching_debug.jsonl") if args.dump_matching else None,
    )
    print(
        f"trained {len(report.records)} epochs; best val mIoU "
        f"{report.best_val_miou:.4f} at epoch {report.best_epoch}"
    )
    print(f"checkpoint: {out_dir / 'checkpoint.pt'}")
    return 0


def _cmd_eval(args) -> int:
    cfgs = load_config(args.config)
    corpus = _load_corpus_for(args, cfgs["gen"])
    videos = getattr(corpus, args.split)
    if not videos:
        raise SystemExit(f"split {args.split!r} is empty")
    model, _ = load_checkpoint(args.checkpoint, expected_config=cfgs["model"])
    metrics = evaluate_tasks(model, videos)
    metrics["random_proposal_baseline_miou"] = random_proposal_baseline(videos, seed=0)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2)
    if args.dump_similarity:
        from .inference import ground_multi

        rows = {}
        for i, video in enumerate(videos):
            result = ground_multi([a.tokens for a in video.annotations], video.features, model)
            rows[f"video_{i}"] = result.omega
        np.savez_compressed(out_dir / "similarity.npz", **rows)
        print(f"similarity rows: {out_dir / 'similarity.npz'}")
    print(json.dumps(metrics, indent=2))
    return 0


def _cmd_experiment(args) -> int:
    cfgs = load_config(args.config)
    train_cfg = cfgs["train"]
    if args.seed is not None:
        train_cfg = dataclasses.replace(train_cfg, seed=args.seed)
    result = run_experiment(
        cfgs["gen"], cfgs["model"], train_cfg, mode=args.mode, out_dir=args.out
    )
    print(json.dumps(result, indent=2, default=float))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gvl",
        description="Grounded video-language set prediction on synthetic corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--data", default=None, help="corpus dir from datagen (else generated)")
    p_train.add_argument("--dump-matching", action="store_true")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the three tasks")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--data", default=None)
    p_eval.add_argument("--split", default="test", choices=("train", "val", "test"))
    p_eval.add_argument("--dump-similarity", action="store_true")
    p_eval.set_defaults(func=_cmd_eval)

    p_exp = sub.add_parser("experiment", help="run an experiment/ablation mode")
    p_exp.add_argument("--config", required=True)
    p_exp.add_argument("--mode", required=True, choices=EXPERIMENT_MODES)
    p_exp.add_argument("--out", required=True)
    p_exp.add_argument("--seed", type=int, default=None)
    p_exp.set_defaults(func=_cmd_experiment)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
