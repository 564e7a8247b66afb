"""Command-line entry point: ``actorhoi {synth,train,eval,infer,heatmap}``.

Every command resolves a :class:`RunConfig` from ``--config`` (JSON) plus flag
overrides and writes a ``<command>.config.json`` snapshot into ``--out``.
The output directory defaults to ``$ACTORHOI_OUT`` or ``./runs/default``.
Failures exit with status 1 and print one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from collections import Counter
from pathlib import Path
from typing import List, Optional

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import MASK_MODES, WO_PLACEMENTS, RunConfig, load_run_config, save_config, to_dict
from .evaluation import class_counts, evaluate
from .files import Dataset, save_heatmap, write_predictions, write_report, write_split
from .inference import run_actors, split_detections
from .pipeline import detector_config
from .supervision import make_input
from .model import forward
from .synth import complexity_subset, stub_detect
from .training import TrainScene, train

OUT_ENV = "ACTORHOI_OUT"
CHECKPOINT = "model.ckpt"
LOSS_LOG = "loss_log.jsonl"

log = logging.getLogger("actorhoi")


class CliError(Exception):
    pass


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; flags override its values")
    p.add_argument("--seed", type=int, help="seed for data, init, and training")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or runs/default)")
    p.add_argument("--mask-mode", choices=MASK_MODES)
    p.add_argument("--actor-branch", type=_on_off, metavar="on|off")
    p.add_argument("--wo-channel", choices=WO_PLACEMENTS)
    p.add_argument("--hanning", type=_on_off, metavar="on|off")
    p.add_argument("--scale-weight", type=_on_off, metavar="on|off")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--top-k", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def _data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="dataset directory (default <out>/data)")


def _model_args(p: argparse.ArgumentParser) -> None:
    _data_args(p)
    p.add_argument("--checkpoint", help=f"checkpoint path (default <out>/{CHECKPOINT})")
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--jitter", type=float, help="detector box jitter for this run")
    p.add_argument("--fp-rate", type=float, help="detector false-positive rate for this run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="actorhoi", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", help="generate train/test scenes")
    _common(p)
    p = sub.add_parser("train", help="train a model on the train split")
    _common(p)
    _data_args(p)
    p = sub.add_parser("eval", help="evaluate a checkpoint and write a report")
    _common(p)
    _model_args(p)
    p = sub.add_parser("infer", help="write ranked HOI predictions for a split")
    _common(p)
    _model_args(p)
    p = sub.add_parser("heatmap", help="export branch maps for one actor of one scene")
    _common(p)
    _model_args(p)
    p.add_argument("--image-index", type=int, default=0, help="position of the scene within the split")
    p.add_argument("--actor-index", type=int, default=0, help="which detected human acts as the actor")
    p.add_argument("--upscale", type=int, default=4)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.synth.seed = cfg.model.seed = cfg.train.seed = args.seed
    overrides = {
        ("model", "mask_mode"): args.mask_mode,
        ("train", "actor_branch"): args.actor_branch,
        ("train", "wo_channel"): args.wo_channel,
        ("train", "hanning"): args.hanning,
        ("train", "scale_weight"): args.scale_weight,
        ("train", "epochs"): args.epochs,
        ("train", "lr"): args.lr,
        ("inference", "top_k"): args.top_k,
    }
    for (section, key), value in overrides.items():
        if value is not None:
            setattr(getattr(cfg, section), key, value)
    return cfg.resolve()


def out_dir(args) -> Path:
    path = Path(args.out or os.environ.get(OUT_ENV) or "runs/default")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _dataset(args, out: Path, split: str, cfg: RunConfig) -> Dataset:
    path = Path(args.data or out / "data") / f"{split}.json"
    if not path.exists():
        raise CliError(f"dataset split not found: {path} (run 'actorhoi synth' first)")
    ds = Dataset(path)
    if to_dict(ds.config) != to_dict(cfg.synth):
        raise CliError(f"dataset {path} was generated with a different synth config")
    return ds


def _load_params(args, out: Path, cfg: RunConfig):
    path = Path(args.checkpoint or out / CHECKPOINT)
    if not path.exists():
        raise CliError(f"checkpoint not found: {path} (run 'actorhoi train' first)")
    params, _, _ = load_checkpoint(path, cfg.model)
    return params


def _emit(record: dict) -> None:
    print(json.dumps(record, sort_keys=True))


# ----------------------------------------------------------------------------
# commands


def cmd_synth(args, cfg: RunConfig, out: Path) -> dict:
    data = Path(out / "data")
    counts = {}
    for split in ("train", "test"):
        path = write_split(data, cfg.synth, split)
        ds = Dataset(path)
        counts[split] = dict(sorted(Counter(complexity_subset(a) for a in ds.annotations).items()))
        counts[split]["scenes"] = len(ds)
    return {"data": str(data), "subsets": counts}


def cmd_train(args, cfg: RunConfig, out: Path) -> dict:
    ds = _dataset(args, out, "train", cfg)
    scenes = [TrainScene(i, img, ann, stub_detect(ann, cfg.synth, i)) for i, img, ann in ds.items()]
    log_path = out / LOSS_LOG
    with open(log_path, "w") as fh:

        def on_epoch(epoch: int, mean: float) -> None:
            fh.write(json.dumps({"epoch": epoch + 1, "mean_loss": mean}) + "\n")
            fh.flush()
            log.info("epoch %d mean loss %.6f", epoch + 1, mean)

        params, state, losses = train(scenes, cfg, on_epoch=on_epoch)
    ckpt = out / CHECKPOINT
    save_checkpoint(ckpt, params, state, cfg.model)
    return {"checkpoint": str(ckpt), "loss_log": str(log_path), "epoch_losses": losses}


def _predict(args, cfg: RunConfig, ds: Dataset, params):
    detector = detector_config(cfg.synth, args.jitter, args.fp_rate)
    preds, agents = [], []
    for i, image, ann in ds.items():
        p, a = run_actors(params, image, stub_detect(ann, detector, i), cfg.model, cfg.inference)
        preds.append(p)
        agents.append(a)
    return preds, agents


def cmd_eval(args, cfg: RunConfig, out: Path) -> dict:
    ds = _dataset(args, out, args.split, cfg)
    params = _load_params(args, out, cfg)
    preds, agents = _predict(args, cfg, ds, params)
    train_path = Path(args.data or out / "data") / "train.json"
    counts = class_counts(Dataset(train_path).annotations) if train_path.exists() else None
    report = evaluate(
        preds, ds.annotations, cfg.synth.num_verbs, cfg.synth.num_object_categories, cfg.eval, agents, counts
    )
    write_predictions(out / "predictions.json", ds.indices, preds)
    jpath, tpath = write_report(out, report)
    return {"report": str(jpath), "text": str(tpath), "mAP": report.mAP, "agent_mAP": report.agent_mAP}


def cmd_infer(args, cfg: RunConfig, out: Path) -> dict:
    ds = _dataset(args, out, args.split, cfg)
    params = _load_params(args, out, cfg)
    preds, _ = _predict(args, cfg, ds, params)
    path = out / "predictions.json"
    write_predictions(path, ds.indices, preds)
    return {"predictions": str(path), "n_predictions": sum(len(p) for p in preds)}


def cmd_heatmap(args, cfg: RunConfig, out: Path) -> dict:
    ds = _dataset(args, out, args.split, cfg)
    if not 0 <= args.image_index < len(ds):
        raise CliError(f"image index {args.image_index} outside [0, {len(ds)})")
    params = _load_params(args, out, cfg)
    index, ann = ds.indices[args.image_index], ds.annotations[args.image_index]
    detector = detector_config(cfg.synth, args.jitter, args.fp_rate)
    humans, _ = split_detections(stub_detect(ann, detector, index))
    if not 0 <= args.actor_index < len(humans):
        raise CliError(f"actor index {args.actor_index} outside [0, {len(humans)})")
    x = make_input(ds.image(args.image_index), humans[args.actor_index].box, cfg.model.mask_mode)
    actor_map, object_map, _ = forward(params, x, cfg.model)
    target = out / "heatmaps" / f"scene{index:05d}_actor{args.actor_index}"
    target.mkdir(parents=True, exist_ok=True)
    K = cfg.model.num_verbs
    names = [f"v{c}" for c in range(K)] + ["wo"]
    files: List[str] = []
    for branch, grid in (("actor", actor_map), ("object", object_map)):
        for c, name in enumerate(names):
            path = target / f"{branch}_{name}.png"
            save_heatmap(grid[..., c], path, args.upscale)
            files.append(str(path))
    # the actor mask at input resolution (all zero under the rgb ablation)
    mask = x[..., 3] if x.shape[-1] == 4 else np.zeros(x.shape[:2])
    path = target / "mask.png"
    save_heatmap(mask, path)
    files.append(str(path))
    return {"files": files}


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "infer": cmd_infer, "heatmap": cmd_heatmap}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve_config(args)
        out = out_dir(args)
        save_config(cfg, out / f"{args.command}.config.json")
        result = COMMANDS[args.command](args, cfg, out)
    except (CliError, CheckpointError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(
            json.dumps({"status": "error", "command": args.command, "error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    _emit({"status": "ok", "command": args.command, **result})
    return 0


if __name__ == "__main__":
    sys.exit(main())
