"""Default desk-scale benchmark: train on 200 synthetic scenes, report test mAP.

    python3 scripts/benchmark.py [--seed 0] [--epochs 20] [--config run.json]
"""

import argparse
import time

from actorhoi.config import load_run_config
from actorhoi.pipeline import evaluate_on, generate_split, train_on


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int)
    args = ap.parse_args()
    cfg = load_run_config(args.config)
    cfg.synth.seed = cfg.model.seed = cfg.train.seed = args.seed
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    cfg.resolve()

    start = time.perf_counter()
    train_scenes = generate_split(cfg.synth, "train")
    test_scenes = generate_split(cfg.synth, "test")
    params, _, losses = train_on(
        train_scenes, cfg, on_epoch=lambda e, m: print(f"epoch {e + 1:3d}  mean loss {m:10.4f}", flush=True)
    )
    report = evaluate_on(params, test_scenes, cfg, train_annotations=[a for _, _, a in train_scenes])
    print(report.to_text())
    print(f"loss ratio last/first {losses[-1] / losses[0]:.4f}   wall {time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
