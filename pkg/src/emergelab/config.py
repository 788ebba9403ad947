"""Experiment configuration: YAML files with includes, presets, manifests."""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path

import yaml

from . import agents, smoothing, training

TOOL_VERSION = "0.1.0"

PRESETS = {
    "desk": {
        "dataset": {"instances_per_class": 30, "height": 16, "width": 16, "seed": 0},
        "pretrain": {"epochs": training.DESK_EPOCHS["pretrain"], "lr": 0.3,
                     "batch_size": 128},
        "train": {"scenario": "frozen_vision", "lr": 0.0005, "batch_size": 128,
                  "entropy_coeff": 0.02},
        "game": {"vocab_size": 4, "message_length": 3, "distractors": 2},
        "epochs_by_scenario": training.DESK_EPOCHS,
    },
    "paper": {
        "dataset": {"instances_per_class": 1500, "height": 64, "width": 64, "seed": 0},
        "pretrain": {"epochs": training.PAPER_EPOCHS["pretrain"], "lr": 0.001,
                     "batch_size": 128},
        "train": {"scenario": "frozen_vision", "lr": 0.0005, "batch_size": 128,
                  "entropy_coeff": 0.02},
        "game": {"vocab_size": 4, "message_length": 3, "distractors": 2},
        "epochs_by_scenario": training.PAPER_EPOCHS,
    },
}

DEFAULTS = {
    "smoothing": {"condition": "default"},
    "pairing": {"sender": "default", "receiver": "default"},
    "runs": 1,
    "seed": 0,
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | None, preset: str = "desk", overrides: dict | None = None) -> dict:
    """Resolve a config: preset defaults <- includes <- file <- overrides."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    resolved = _deep_merge(DEFAULTS, PRESETS[preset])
    if path is not None:
        resolved = _deep_merge(resolved, _load_file(Path(path)))
    if overrides:
        resolved = _deep_merge(resolved, overrides)
    resolved["preset"] = preset
    return resolved


def _load_file(path: Path) -> dict:
    with open(path) as f:
        raw = yaml.safe_load(f) or {}
    includes = raw.pop("include", [])
    if isinstance(includes, str):
        includes = [includes]
    merged: dict = {}
    for inc in includes:
        if inc in PRESETS:
            merged = _deep_merge(merged, PRESETS[inc])
        else:
            merged = _deep_merge(merged, _load_file(path.parent / inc))
    return _deep_merge(merged, raw)


def output_root(explicit: str | None) -> Path:
    root = explicit or os.environ.get("EMERGELAB_OUT") or "."
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# Constructors from resolved config


def dataset_from_config(cfg: dict):
    from . import world

    d = cfg["dataset"]
    if "path" in d:
        return world.ingest_external(d["path"])
    return world.build_dataset(
        instances_per_class=d["instances_per_class"],
        height=d.get("height", 16),
        width=d.get("width", 16),
        seed=d.get("seed", 0),
    )


def smoothing_spec_from_config(section: dict) -> smoothing.SmoothingSpec:
    condition = section.get("condition", "default")
    if "sigma" not in section and "weights" not in section:
        return smoothing.default_spec(condition)
    base = smoothing.default_spec(condition)
    return smoothing.SmoothingSpec(
        condition=base.condition,
        sigma=section.get("sigma", base.sigma),
        attribute_pair=base.attribute_pair,
        weights=tuple(section["weights"]) if "weights" in section else base.weights,
    )


def game_config_from_config(cfg: dict) -> agents.GameConfig:
    g = cfg["game"]
    relevance = tuple(g.get("relevance", ("color", "scale", "shape")))
    return agents.GameConfig(
        vocab_size=g.get("vocab_size", 4),
        message_length=g.get("message_length", 3),
        distractors=g.get("distractors", 2),
        relevance_mask=relevance,
    )


def pretrain_config_from_config(cfg: dict) -> training.PretrainConfig:
    p = cfg["pretrain"]
    return training.PretrainConfig(
        lr=p.get("lr", 0.001),
        batch_size=p.get("batch_size", 128),
        epochs=p.get("epochs", training.DESK_EPOCHS["pretrain"]),
        rsm_per_class=p.get("rsm_per_class", 50),
    )


def train_config_from_config(cfg: dict) -> training.GameTrainConfig:
    t = cfg["train"]
    scenario = t.get("scenario", "frozen_vision")
    epochs = t.get("epochs")
    if epochs is None:
        epochs = cfg.get("epochs_by_scenario", training.DESK_EPOCHS)[scenario]
    return training.GameTrainConfig(
        scenario=scenario,
        lr=t.get("lr", 0.0005),
        batch_size=t.get("batch_size", 128),
        epochs=epochs,
        entropy_coeff=t.get("entropy_coeff", 0.02),
        use_baseline=t.get("use_baseline", False),
    )


# ---------------------------------------------------------------------------
# Run manifests


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, cfg: dict, seeds: list[int],
                   checkpoints: list[str] | None = None,
                   started: float | None = None) -> Path:
    manifest = {
        "config": cfg,
        "seeds": seeds,
        "checkpoint_hashes": {
            str(p): file_hash(p) for p in (checkpoints or []) if Path(p).exists()
        },
        "tool_version": TOOL_VERSION,
        "wall_clock_s": None if started is None else round(time.time() - started, 3),
    }
    path = out_dir / "manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
    return path
