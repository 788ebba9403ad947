#!/usr/bin/env python3
"""Evolutionary tournament across bias types.

Pretrains (or loads) a vision module per bias type, plays frozen-vision games
for every ordered sender/receiver pairing, symmetrizes the payoff matrix, and
runs pure-ESS detection with bootstrap significance.

Usage:
    python scripts/run_tournament.py --types default scale all --runs 5 --workers 8
"""

import argparse
from pathlib import Path

import numpy as np

from emergelab import agents, evolution, metrics, nn, smoothing, training, world


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--types", nargs="+", default=["default", "scale", "all"])
    ap.add_argument("--runs", type=int, default=5, help="Runs per ordered pair.")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/tournament", type=Path)
    ap.add_argument("--checkpoint-dir", type=Path, default=None,
                    help="Directory with vision_<type>.emrgw files to reuse.")
    ap.add_argument("--per-class", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    dataset = world.build_dataset(args.per_class, seed=0)
    pre_cfg = training.PretrainConfig()

    weights = {}
    for i, t in enumerate(args.types):
        ckpt = args.checkpoint_dir / f"vision_{t}.emrgw" if args.checkpoint_dir else None
        if ckpt and ckpt.exists():
            weights[t] = nn.load_parameters(str(ckpt))
            print(f"loaded {t} from {ckpt}")
        else:
            vision = agents.VisionModule(seed=args.seed + 7919 * (i + 1))
            _, acc = training.pretrain_vision(
                vision, dataset, smoothing.default_spec(t), pre_cfg,
                np.random.default_rng(args.seed + 7919 * (i + 1)),
            )
            weights[t] = {p.name: p.data.copy() for p in vision.parameters()}
            print(f"pretrained {t}: accuracy={acc:.3f}")

    table = evolution.run_tournament(
        args.types, weights, dataset, agents.GameConfig(),
        training.GameTrainConfig(scenario="frozen_vision"),
        args.runs, args.seed, args.workers,
    )
    table.save_csv(args.out / "payoff.csv")
    sym = evolution.symmetrize(table)
    metrics.save_rsm_csv(sym.matrix, args.out / "payoff_symmetric.csv")
    report = evolution.annotate_significance(
        evolution.find_pure_ess(sym), table, seed=args.seed
    )
    (args.out / "ess.json").write_text(report.to_json())

    print("\nsymmetrized payoff:")
    header = " ".join(f"{t:>10s}" for t in args.types)
    print(f"{'':10s} {header}")
    for i, t in enumerate(args.types):
        row = " ".join(f"{sym.matrix[i, j]:10.3f}" for j in range(len(args.types)))
        print(f"{t:10s} {row}")
    for t in args.types:
        print(f"{t}: ESS={report.is_ess[t]} condition={report.condition[t]} "
              f"significant={report.significant[t]}")


if __name__ == "__main__":
    main()
