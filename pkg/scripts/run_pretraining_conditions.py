#!/usr/bin/env python3
"""Pretrain one vision module per bias condition and tabulate RSA scores.

Produces the bias-ordering table: per-attribute RSA, overall RSA, and test
accuracy for each smoothing condition, plus checkpoints for reuse.

Usage:
    python scripts/run_pretraining_conditions.py --out results/pretrain
    python scripts/run_pretraining_conditions.py --conditions default scale
"""

import argparse
import csv
import time
from pathlib import Path

import numpy as np

from emergelab import agents, metrics, nn, smoothing, training, world

CONDITIONS = ["default", "color", "scale", "shape", "all"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/pretrain", type=Path)
    ap.add_argument("--conditions", nargs="+", default=CONDITIONS)
    ap.add_argument("--per-class", type=int, default=30)
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    dataset = world.build_dataset(args.per_class, seed=0)
    cfg = training.PretrainConfig(**({"epochs": args.epochs} if args.epochs else {}))

    rows = []
    for condition in args.conditions:
        spec = smoothing.default_spec(condition)
        vision = agents.VisionModule(dataset.height, dataset.width, seed=args.seed)
        t0 = time.time()
        _, accuracy = training.pretrain_vision(
            vision, dataset, spec, cfg, np.random.default_rng(args.seed)
        )
        nn.save_parameters(vision.parameters(), str(args.out / f"vision_{spec.label}.emrgw"))
        rsm = metrics.rsm_from_vision(vision, dataset, cfg.rsm_per_class, seed=0)
        metrics.save_rsm_csv(rsm, args.out / f"rsm_{spec.label}.csv")
        metrics.save_rsm_pgm(rsm, args.out / f"rsm_{spec.label}.pgm")
        scores = metrics.attribute_rsa_scores(rsm)
        row = dict(condition=condition, accuracy=accuracy, seconds=time.time() - t0,
                   **{f"rsa_{k}": v for k, v in scores.items()})
        rows.append(row)
        print(f"{condition:8s} acc={accuracy:.3f} "
              + " ".join(f"{a}={scores[a]:+.3f}" for a in world.ATTRIBUTES)
              + f" overall={scores['overall']:.3f} ({row['seconds']:.0f}s)")

    with open(args.out / "bias_table.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


if __name__ == "__main__":
    main()
