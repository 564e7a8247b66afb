"""Ablation table on the default benchmark, averaged over seeds.

Each row changes one setting from the default run. The jitter rows reuse the
default checkpoint of the same seed with a noisier detector at test time.

    python3 scripts/ablations.py --seeds 0 1 2 3 [--epochs 20]
"""

import argparse

import numpy as np

from actorhoi.config import RunConfig
from actorhoi.pipeline import detector_config, evaluate_on, generate_split, train_on

VARIANTS = {
    "default (rgbm, fused)": {},
    "input rgb": {"mask_mode": "rgb"},
    "input rgb+255": {"mask_mode": "rgb+255"},
    "object branch only": {"actor_branch": False},
    "no hanning weight": {"hanning": False},
    "no scale weight": {"scale_weight": False},
    "w/o channel: none": {"wo_channel": "none"},
    "w/o channel: both": {"wo_channel": "both"},
}
JITTERS = (0.05, 0.1, 0.2)


def variant(seed, epochs, changes):
    cfg = RunConfig()
    cfg.synth.seed = cfg.model.seed = cfg.train.seed = seed
    cfg.train.epochs = epochs
    for key, value in changes.items():
        setattr(cfg.model if key == "mask_mode" else cfg.train, key, value)
    return cfg.resolve()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--epochs", type=int, default=20)
    args = ap.parse_args()

    rows = {name: [] for name in VARIANTS}
    rows.update({f"test jitter {j}": [] for j in JITTERS})
    for seed in args.seeds:
        base = variant(seed, args.epochs, {})
        train_scenes = generate_split(base.synth, "train")
        test_scenes = generate_split(base.synth, "test")
        for name, changes in VARIANTS.items():
            cfg = variant(seed, args.epochs, changes)
            params, _, _ = train_on(train_scenes, cfg)
            rows[name].append(evaluate_on(params, test_scenes, cfg).mAP)
            print(f"seed {seed}  {name:<24} mAP {rows[name][-1]:.4f}", flush=True)
            if not changes:
                for j in JITTERS:
                    m = evaluate_on(params, test_scenes, cfg, detector_config(cfg.synth, jitter=j)).mAP
                    rows[f"test jitter {j}"].append(m)
                    print(f"seed {seed}  {'test jitter ' + str(j):<24} mAP {m:.4f}", flush=True)

    print(f"\n{'variant':<26}{'mean mAP':>10}{'std':>8}   per seed")
    for name, values in rows.items():
        v = np.array(values)
        print(f"{name:<26}{v.mean():>10.4f}{v.std():>8.4f}   " + " ".join(f"{x:.4f}" for x in v))


if __name__ == "__main__":
    main()
