"""Config-driven command-line front end (`emergelab <subcommand>`)."""

from __future__ import annotations

import csv
import itertools
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import agents, config, evolution, metrics, nn, smoothing, training, world


def _fail(message: str, code: int = 1):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _weights_of(module) -> dict:
    return {p.name: p.data.copy() for p in module.parameters()}


@click.group()
def main():
    """Desk-scale laboratory for perception/communication experiments."""


common_options = [
    click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                 help="YAML experiment config."),
    click.option("--seed", type=int, default=None, help="Master seed override."),
    click.option("--out", "out_dir", type=click.Path(), default=None,
                 help="Output directory (default $EMERGELAB_OUT or cwd)."),
    click.option("--workers", type=int, default=1, help="Parallel worker count."),
    click.option("--preset", type=click.Choice(["desk", "paper"]), default="desk"),
]


def with_common(fn):
    for opt in reversed(common_options):
        fn = opt(fn)
    return fn


def _resolve(config_path, preset, seed):
    """Load and merge the config; config problems are usage errors (exit 2)."""
    try:
        cfg = config.load_config(config_path, preset)
    except Exception as exc:  # noqa: BLE001
        _fail(f"bad config: {exc}", 2)
    if seed is not None:
        cfg["seed"] = seed
    return cfg


@main.command()
@click.option("--per-class", type=int, required=True, help="Instances per class.")
@click.option("--size", type=int, default=16, help="Square image size in pixels.")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", type=click.Path(), required=True)
def dataset(per_class, size, seed, out_path):
    """Build a dataset and write it in the binary exchange format."""
    try:
        ds = world.build_dataset(per_class, size, size, seed)
        world.save_dataset(ds, out_path)
        click.echo(f"wrote {len(ds)} items to {out_path}")
    except ValueError as exc:
        _fail(str(exc), 2)
    except Exception as exc:  # noqa: BLE001
        _fail(str(exc))


def _pretrain_condition(dataset_, condition_cfg, pretrain_cfg, seed):
    spec = config.smoothing_spec_from_config(condition_cfg)
    vision = agents.VisionModule(dataset_.height, dataset_.width, seed=seed)
    _, accuracy = training.pretrain_vision(
        vision, dataset_, spec, pretrain_cfg, np.random.default_rng(seed)
    )
    return vision, spec, accuracy


def _write_bias_report(out_dir: Path, name: str, scores: dict, accuracy: float):
    path = out_dir / f"bias_report_{name}.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        for attr in world.ATTRIBUTES:
            w.writerow([f"rsa_{attr}", f"{scores[attr]:.10g}"])
        w.writerow(["rsa_overall", f"{scores['overall']:.10g}"])
        w.writerow(["test_accuracy", f"{accuracy:.10g}"])
    return path


@main.command()
@with_common
def pretrain(config_path, seed, out_dir, workers, preset):
    """Pretrain a vision module and report its perceptual bias."""
    try:
        started = time.time()
        cfg = _resolve(config_path, preset, seed)
        out = config.output_root(out_dir)
        ds = config.dataset_from_config(cfg)
        pre_cfg = config.pretrain_config_from_config(cfg)
        master = cfg["seed"]
        condition = cfg["smoothing"].get("condition", "default")
        vision, spec, accuracy = _pretrain_condition(ds, cfg["smoothing"], pre_cfg, master)
        ckpt = out / f"vision_{spec.label}.emrgw"
        nn.save_parameters(vision.parameters(), str(ckpt))
        rsm = metrics.rsm_from_vision(vision, ds, pre_cfg.rsm_per_class, seed=master)
        scores = metrics.attribute_rsa_scores(rsm)
        _write_bias_report(out, spec.label, scores, accuracy)
        metrics.save_rsm_csv(rsm, out / f"rsm_{spec.label}.csv")
        metrics.save_rsm_pgm(rsm, out / f"rsm_{spec.label}.pgm")
        config.write_manifest(out, cfg, [master], [str(ckpt)], started)
        click.echo(
            f"{condition}: accuracy={accuracy:.3f} "
            + " ".join(f"rsa_{a}={scores[a]:.3f}" for a in world.ATTRIBUTES)
        )
    except Exception as exc:  # noqa: BLE001
        _fail(str(exc))


def _run_training(cfg, out: Path, workers: int = 1):
    """Shared implementation for the train command and sweep cells."""
    started = time.time()
    ds = config.dataset_from_config(cfg)
    game_cfg = config.game_config_from_config(cfg)
    train_cfg = config.train_config_from_config(cfg)
    pre_cfg = config.pretrain_config_from_config(cfg)
    master = cfg["seed"]
    runs = cfg.get("runs", 1)
    pairing = cfg["pairing"]
    mode = cfg["train"].get("mode", "pair")

    conditions = {}

    def vision_weights(condition: str, who: str):
        key = condition
        if key not in conditions:
            ckpt = pairing.get(f"{who}_checkpoint")
            if ckpt:
                conditions[key] = (nn.load_parameters(ckpt),
                                   smoothing.default_spec(condition))
            else:
                vision, spec, _ = _pretrain_condition(
                    ds, {"condition": condition}, pre_cfg,
                    master + 7919 * (1 + sorted(smoothing.CONDITIONS).index(
                        spec_condition_key(condition)))
                )
                conditions[key] = (_weights_of(vision), spec)
        return conditions[key]

    def spec_condition_key(condition):
        return condition if condition in smoothing.CONDITIONS else "mixed"

    rewards, checkpoints = [], []
    for run in range(runs):
        run_seed = master + run
        run_dir = out / f"run_{run:03d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        s_weights, s_spec = vision_weights(pairing.get("sender", "default"), "sender")
        r_weights, r_spec = vision_weights(pairing.get("receiver", "default"), "receiver")
        if mode == "flexible":
            a = agents.FlexibleAgent(game_cfg.vocab_size, ds.height, ds.width, seed=run_seed)
            b = agents.FlexibleAgent(game_cfg.vocab_size, ds.height, ds.width, seed=run_seed + 1)
            nn.assign_parameters(a.vision.parameters(), s_weights)
            nn.assign_parameters(b.vision.parameters(), r_weights)
            log = training.run_flexible(a, b, ds, game_cfg, train_cfg, run_seed,
                                        s_spec, r_spec)
            pair = (a, b)
        elif mode == "population":
            n = cfg["train"].get("population_size", 2)
            senders = [agents.SenderAgent(game_cfg.vocab_size, ds.height, ds.width,
                                          seed=run_seed + i) for i in range(n)]
            receivers = [agents.ReceiverAgent(game_cfg.vocab_size, ds.height, ds.width,
                                              seed=run_seed + 100 + i) for i in range(n)]
            for s in senders:
                nn.assign_parameters(s.vision.parameters(), s_weights)
            for r in receivers:
                nn.assign_parameters(r.vision.parameters(), r_weights)
            log = training.run_population(senders, receivers, ds, game_cfg, train_cfg,
                                          run_seed,
                                          [s_spec] * n, [r_spec] * n)
            pair = (senders[0], receivers[0])
        else:
            sender = agents.SenderAgent(game_cfg.vocab_size, ds.height, ds.width,
                                        seed=run_seed)
            receiver = agents.ReceiverAgent(game_cfg.vocab_size, ds.height, ds.width,
                                            seed=run_seed + 1)
            nn.assign_parameters(sender.vision.parameters(), s_weights)
            nn.assign_parameters(receiver.vision.parameters(), r_weights)
            log = training.run_scenario(sender, receiver, ds, game_cfg, train_cfg,
                                        run_seed, s_spec, r_spec)
            pair = (sender, receiver)
        log.save_csv(run_dir / "trainlog.csv")
        log.message_log.save_csv(run_dir / "messages.csv")
        s_path, r_path = run_dir / "sender.emrgw", run_dir / "receiver.emrgw"
        pair[0].save(str(s_path))
        pair[1].save(str(r_path))
        with open(run_dir / "roles.json", "w") as f:
            json.dump({"sender_role": pair[0].role, "receiver_role": pair[1].role,
                       "game": {"vocab_size": game_cfg.vocab_size,
                                "message_length": game_cfg.message_length,
                                "distractors": game_cfg.distractors,
                                "relevance": list(game_cfg.relevance_mask)}},
                      f, indent=2, sort_keys=True)
        checkpoints += [str(s_path), str(r_path)]
        rewards.append(log.final_reward)

    ci = metrics.bootstrap_ci(rewards, "mean", seed=master) if len(rewards) > 1 else None
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value", "ci_lower", "ci_upper"])
        mean = float(np.mean(rewards))
        lo = ci.lower if ci else mean
        hi = ci.upper if ci else mean
        w.writerow(["test_reward", f"{mean:.10g}", f"{lo:.10g}", f"{hi:.10g}"])
    config.write_manifest(out, cfg, [master + i for i in range(runs)],
                          checkpoints, started)
    return rewards


@main.command()
@with_common
def train(config_path, seed, out_dir, workers, preset):
    """Run the configured training scenario for each seed."""
    try:
        cfg = _resolve(config_path, preset, seed)
        out = config.output_root(out_dir)
        rewards = _run_training(cfg, out, workers)
        click.echo(f"mean test reward over {len(rewards)} runs: {np.mean(rewards):.3f}")
    except Exception as exc:  # noqa: BLE001
        _fail(str(exc))


@main.command()
@click.argument("message_logs", nargs=-1, type=click.Path(exists=True))
@click.option("--vision", "visions", multiple=True,
              help="Vision checkpoint as name=path (repeatable).")
@with_common
def analyze(message_logs, visions, config_path, seed, out_dir, workers, preset):
    """Metric report: effectiveness per attribute, RSA, alignment."""
    try:
        started = time.time()
        cfg = _resolve(config_path, preset, seed)
        out = config.output_root(out_dir)
        if message_logs:
            logs = [metrics.MessageLog.load_csv(p) for p in message_logs]
            rows = []
            for label, proj in [("overall", "all")] + [(a, a) for a in world.ATTRIBUTES]:
                scores = [metrics.effectiveness(log, proj) for log in logs]
                ci = (metrics.bootstrap_ci(scores, "mean", seed=cfg["seed"])
                      if len(scores) > 1 else None)
                mean = float(np.mean(scores))
                rows.append([f"effectiveness_{label}", mean,
                             ci.lower if ci else mean, ci.upper if ci else mean])
            avg = [metrics.average_effectiveness(log) for log in logs]
            ci = metrics.bootstrap_ci(avg, "mean", seed=cfg["seed"]) if len(avg) > 1 else None
            mean = float(np.mean(avg))
            rows.append(["effectiveness_average", mean,
                         ci.lower if ci else mean, ci.upper if ci else mean])
            with open(out / "effectiveness.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["metric", "mean", "ci_lower", "ci_upper"])
                for row in rows:
                    w.writerow([row[0]] + [f"{v:.10g}" for v in row[1:]])
        if visions:
            ds = config.dataset_from_config(cfg)
            rsms = {}
            for item in visions:
                name, _, path = item.partition("=")
                vision = agents.VisionModule(ds.height, ds.width)
                nn.assign_parameters(vision.parameters(), nn.load_parameters(path))
                rsms[name] = metrics.rsm_from_vision(vision, ds, seed=cfg["seed"])
            with open(out / "rsa.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["vision", "rsa_color", "rsa_scale", "rsa_shape",
                            "rsa_overall"])
                for name, rsm in rsms.items():
                    s = metrics.attribute_rsa_scores(rsm)
                    w.writerow([name] + [f"{s[k]:.10g}" for k in
                                         ("color", "scale", "shape", "overall")])
            if len(rsms) > 1:
                with open(out / "alignment.csv", "w", newline="") as f:
                    w = csv.writer(f)
                    w.writerow(["vision_a", "vision_b", "rsa"])
                    names = list(rsms)
                    for a, b in itertools.combinations(names, 2):
                        w.writerow([a, b, f"{metrics.rsa(rsms[a], rsms[b]):.10g}"])
        config.write_manifest(out, cfg, [cfg["seed"]], [], started)
    except Exception as exc:  # noqa: BLE001
        _fail(str(exc))


def _set_dotted(cfg: dict, dotted: str, value):
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


@main.command()
@with_common
def sweep(config_path, seed, out_dir, workers, preset):
    """Cartesian sweep over the grid axes declared under sweep.axes."""
    try:
        cfg = _resolve(config_path, preset, seed)
        axes = cfg.get("sweep", {}).get("axes")
        if not axes:
            _fail("config has no sweep.axes section", 2)
        out = config.output_root(out_dir)
        keys = sorted(axes)
        cells = list(itertools.product(*(axes[k] for k in keys)))
        for values in cells:
            cell_cfg = json.loads(json.dumps(cfg))  # deep copy
            label = "_".join(
                f"{k.split('.')[-1]}{v}" for k, v in zip(keys, values)
            )
            for k, v in zip(keys, values):
                _set_dotted(cell_cfg, k, v)
            cell_dir = out / label
            cell_dir.mkdir(parents=True, exist_ok=True)
            _run_training(cell_cfg, cell_dir, workers)
        click.echo(f"swept {len(cells)} cells into {out}")
    except SystemExit:
        raise
    except Exception as exc:  # noqa: BLE001
        _fail(str(exc))


@main.command()
@with_common
def evolve(config_path, seed, out_dir, workers, preset):
    """Tournament across bias types plus ESS detection."""
    try:
        started = time.time()
        cfg = _resolve(config_path, preset, seed)
        out = config.output_root(out_dir)
        ds = config.dataset_from_config(cfg)
        game_cfg = config.game_config_from_config(cfg)
        train_cfg = config.train_config_from_config(cfg)
        pre_cfg = config.pretrain_config_from_config(cfg)
        ev = cfg.get("evolve", {})
        types = ev.get("types", ["default", "scale", "all"])
        runs_per_pair = ev.get("runs_per_pair", 5)
        master = cfg["seed"]
        weights = {}
        for i, t in enumerate(types):
            vision, _, acc = _pretrain_condition(ds, {"condition": t}, pre_cfg,
                                                 master + 7919 * (i + 1))
            weights[t] = _weights_of(vision)
            click.echo(f"pretrained {t}: accuracy={acc:.3f}")
        table = evolution.run_tournament(types, weights, ds, game_cfg, train_cfg,
                                         runs_per_pair, master, workers)
        table.save_csv(out / "payoff.csv")
        sym = evolution.symmetrize(table)
        metrics.save_rsm_csv(sym.matrix, out / "payoff_symmetric.csv")
        metrics.save_rsm_pgm(sym.matrix * 2 - 1, out / "payoff_symmetric.pgm")
        report = evolution.find_pure_ess(sym)
        report = evolution.annotate_significance(report, table, seed=master)
        with open(out / "ess.json", "w") as f:
            f.write(report.to_json())
        config.write_manifest(out, cfg, [master], [], started)
        ess_types = [t for t in types if report.is_ess[t]]
        click.echo(f"ESS types: {ess_types or 'none'}")
    except Exception as exc:  # noqa: BLE001
        _fail(str(exc))


@main.command()
@click.argument("run_dirs", nargs=-1, type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=None)
def report(run_dirs, out_dir):
    """Consolidate manifests and summary CSVs from run directories."""
    try:
        out = config.output_root(out_dir)
        rows = []
        for d in run_dirs:
            d = Path(d)
            manifest = {}
            if (d / "manifest.json").exists():
                manifest = json.loads((d / "manifest.json").read_text())
            summary = {}
            if (d / "summary.csv").exists():
                with open(d / "summary.csv", newline="") as f:
                    for r in csv.DictReader(f):
                        summary[r["metric"]] = r["value"]
            rows.append({
                "run_dir": str(d),
                "scenario": manifest.get("config", {}).get("train", {}).get(
                    "scenario", ""),
                "seed": (manifest.get("seeds") or [""])[0],
                "test_reward": summary.get("test_reward", ""),
            })
        with open(out / "report.csv", "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=["run_dir", "scenario", "seed",
                                              "test_reward"])
            w.writeheader()
            for row in rows:
                w.writerow(row)
        click.echo(f"consolidated {len(rows)} run directories")
    except Exception as exc:  # noqa: BLE001
        _fail(str(exc))


if __name__ == "__main__":
    main()
