#!/usr/bin/env python3
"""Language-to-perception transfer: does playing the game with a biased
partner reshape an unbiased agent's visual representations?

Pairs a scale-biased sender with a default receiver under joint emergence
training (vision + language + classification loss) and measures, over several
seeds, the change in the receiver's scale RSA and in cross-agent
representational alignment.

Usage:
    python scripts/run_language_to_perception.py \
        --sender-checkpoint results/pretrain/vision_scale.emrgw \
        --receiver-checkpoint results/pretrain/vision_default.emrgw
"""

import argparse
import csv
from pathlib import Path

from emergelab import agents, metrics, nn, smoothing, training, world


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sender-checkpoint", required=True)
    ap.add_argument("--receiver-checkpoint", required=True)
    ap.add_argument("--sender-condition", default="scale")
    ap.add_argument("--receiver-condition", default="default")
    ap.add_argument("--out", default="results/language_to_perception", type=Path)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--per-class", type=int, default=30)
    args = ap.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    dataset = world.build_dataset(args.per_class, seed=0)
    sender_weights = nn.load_parameters(args.sender_checkpoint)
    receiver_weights = nn.load_parameters(args.receiver_checkpoint)
    game_cfg = agents.GameConfig()
    train_cfg = training.GameTrainConfig(scenario="emergence_joint")

    deltas_scale, deltas_align, rewards = [], [], []
    for seed in range(args.seeds):
        sender = agents.SenderAgent(seed=seed)
        receiver = agents.ReceiverAgent(seed=seed + 1)
        nn.assign_parameters(sender.vision.parameters(), sender_weights)
        nn.assign_parameters(receiver.vision.parameters(), receiver_weights)

        rsm_r = metrics.rsm_from_vision(receiver.vision, dataset, seed=0)
        rsm_s = metrics.rsm_from_vision(sender.vision, dataset, seed=0)
        scale_before = metrics.attribute_rsa_scores(rsm_r)["scale"]
        align_before = metrics.rsa(rsm_s, rsm_r)

        log = training.run_scenario(
            sender, receiver, dataset, game_cfg, train_cfg, seed,
            smoothing.default_spec(args.sender_condition),
            smoothing.default_spec(args.receiver_condition),
        )

        rsm_r = metrics.rsm_from_vision(receiver.vision, dataset, seed=0)
        rsm_s = metrics.rsm_from_vision(sender.vision, dataset, seed=0)
        scale_after = metrics.attribute_rsa_scores(rsm_r)["scale"]
        align_after = metrics.rsa(rsm_s, rsm_r)

        deltas_scale.append(scale_after - scale_before)
        deltas_align.append(align_after - align_before)
        rewards.append(log.final_reward)
        print(f"seed {seed}: reward={log.final_reward:.3f} "
              f"rsa_scale {scale_before:+.3f}->{scale_after:+.3f} "
              f"alignment {align_before:+.3f}->{align_after:+.3f}")

    with open(args.out / "transfer.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "mean", "ci_lower", "ci_upper"])
        for name, values in (("delta_rsa_scale", deltas_scale),
                             ("delta_alignment", deltas_align),
                             ("reward", rewards)):
            ci = metrics.bootstrap_ci(values, "mean", seed=0)
            writer.writerow([name, f"{ci.estimate:.10g}", f"{ci.lower:.10g}",
                             f"{ci.upper:.10g}"])
    print(f"wrote {args.out / 'transfer.csv'}")


if __name__ == "__main__":
    main()
