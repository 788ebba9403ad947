#!/usr/bin/env python3
"""Perception-to-language transfer: do biased visual representations shape
what the emergent messages encode?

Trains frozen-vision sender/receiver pairs sharing one pretrained bias
condition over several seeds, and reports per-attribute effectiveness of the
resulting message protocols with bootstrap confidence intervals.

Usage:
    python scripts/run_bias_transfer.py --checkpoint results/pretrain/vision_scale.emrgw
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from emergelab import agents, metrics, nn, training, world


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", required=True,
                    help="Pretrained vision checkpoint used by both agents.")
    ap.add_argument("--out", default="results/transfer", type=Path)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--per-class", type=int, default=30)
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    dataset = world.build_dataset(args.per_class, seed=0)
    weights = nn.load_parameters(args.checkpoint)
    game_cfg = agents.GameConfig()
    train_cfg = training.GameTrainConfig(scenario="frozen_vision")

    per_attr = {a: [] for a in world.ATTRIBUTES}
    rewards = []
    for seed in range(args.seeds):
        reward, message_log, _ = training.train_pair_frozen(
            weights, weights, dataset, game_cfg, train_cfg, seed
        )
        rewards.append(reward)
        scores = {a: metrics.effectiveness(message_log, a) for a in world.ATTRIBUTES}
        for a, v in scores.items():
            per_attr[a].append(v)
        message_log.save_csv(args.out / f"messages_seed{seed}.csv")
        print(f"seed {seed}: reward={reward:.3f} "
              + " ".join(f"E_{a}={scores[a]:.3f}" for a in world.ATTRIBUTES))

    with open(args.out / "effectiveness.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "mean", "ci_lower", "ci_upper"])
        for a in world.ATTRIBUTES:
            ci = metrics.bootstrap_ci(per_attr[a], "mean", seed=0)
            writer.writerow([f"E_{a}", f"{ci.estimate:.10g}",
                             f"{ci.lower:.10g}", f"{ci.upper:.10g}"])
        ci = metrics.bootstrap_ci(rewards, "mean", seed=0)
        writer.writerow(["reward", f"{ci.estimate:.10g}",
                         f"{ci.lower:.10g}", f"{ci.upper:.10g}"])
    print(f"wrote {args.out / 'effectiveness.csv'}")


if __name__ == "__main__":
    main()
