"""Relational label smoothing: biased training targets for vision pretraining.

The training target is a convex mixture of the one-hot label and a
relational component that spreads weight over classes sharing attribute
values with the true class, which amplifies the corresponding
representational similarities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import world

CONDITIONS = ("default", "color", "scale", "shape", "all", "mixed")
GROUP_SIZE = 16  # classes sharing one attribute value


@dataclass(frozen=True)
class SmoothingSpec:
    """Bias condition plus smoothing strength.

    ``attribute_pair`` and ``weights`` are only used for ``mixed``.
    """

    condition: str
    sigma: float = 0.0
    attribute_pair: tuple[str, str] | None = None
    weights: tuple[float, float] | None = None

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError(f"sigma={self.sigma} outside [0, 1]")
        if self.condition == "mixed":
            if self.attribute_pair is None or self.weights is None:
                raise ValueError("mixed condition needs attribute_pair and weights")
            if any(a not in world.ATTRIBUTES for a in self.attribute_pair):
                raise ValueError(f"bad attribute pair {self.attribute_pair}")
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("mixed weights must be nonnegative and sum to 1")

    @property
    def label(self) -> str:
        if self.condition == "mixed":
            return "-".join(self.attribute_pair)
        return self.condition


def default_spec(condition: str) -> SmoothingSpec:
    """Paper-calibrated spec for a named condition.

    Single-attribute conditions use sigma 0.6, the all condition 0.8, and
    the mixed conditions the grid-search selections (sigma 0.8 with
    color-disfavoring weights).
    """
    if condition == "default":
        return SmoothingSpec("default", 0.0)
    if condition in world.ATTRIBUTES:
        return SmoothingSpec(condition, 0.6)
    if condition == "all":
        return SmoothingSpec("all", 0.8)
    mixed = {
        "color-scale": (("color", "scale"), (0.30, 0.70)),
        "color-shape": (("color", "shape"), (0.35, 0.65)),
        "scale-shape": (("scale", "shape"), (0.75, 0.25)),
    }
    if condition in mixed:
        pair, weights = mixed[condition]
        return SmoothingSpec("mixed", 0.8, pair, weights)
    raise ValueError(f"unknown condition {condition!r}")


def one_hot(class_id: int) -> np.ndarray:
    if not 0 <= class_id < world.N_CLASSES:
        raise ValueError(f"class_id={class_id} out of range")
    y = np.zeros(world.N_CLASSES)
    y[class_id] = 1.0
    return y


def relational_component(class_id: int, attribute: str) -> np.ndarray:
    """Uniform weight 1/(n-1) over other classes sharing ``attribute``."""
    if attribute not in world.ATTRIBUTES:
        raise ValueError(f"unknown attribute {attribute!r}")
    value = world.attribute_value(class_id, attribute)
    table = world.class_attribute_table()
    col = world.ATTRIBUTES.index(attribute)
    mask = table[:, col] == value
    mask[class_id] = False
    y = np.zeros(world.N_CLASSES)
    y[mask] = 1.0 / (GROUP_SIZE - 1)
    return y


def relational_component_all(class_id: int) -> np.ndarray:
    """Mean of the three single-attribute components."""
    parts = [relational_component(class_id, a) for a in world.ATTRIBUTES]
    return np.mean(parts, axis=0)


def relational_component_mixed(
    class_id: int, attribute_pair: tuple[str, str], weights: tuple[float, float]
) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be nonnegative and sum to 1")
    return w[0] * relational_component(class_id, attribute_pair[0]) + w[1] * relational_component(
        class_id, attribute_pair[1]
    )


def smoothed_target(class_id: int, spec: SmoothingSpec) -> np.ndarray:
    """sigma * y_r + (1 - sigma) * y_0; the default condition is pure one-hot."""
    y0 = one_hot(class_id)
    if spec.condition == "default" or spec.sigma == 0.0:
        return y0
    if spec.condition in world.ATTRIBUTES:
        yr = relational_component(class_id, spec.condition)
    elif spec.condition == "all":
        yr = relational_component_all(class_id)
    else:
        yr = relational_component_mixed(class_id, spec.attribute_pair, spec.weights)
    return spec.sigma * yr + (1.0 - spec.sigma) * y0


def target_matrix(spec: SmoothingSpec) -> np.ndarray:
    """(64, 64) matrix of smoothed targets, one row per class."""
    return np.array([smoothed_target(c, spec) for c in range(world.N_CLASSES)])


MIXED_PAIRS = (("color", "scale"), ("color", "shape"), ("scale", "shape"))


def grid_search_mixed(
    dataset,
    sigma_grid=(0.6, 0.7, 0.8),
    weight_grid=None,
    pairs=MIXED_PAIRS,
    accuracy_floor: float = 0.90,
    pretrain_config=None,
    seed: int = 0,
    budget: int | None = None,
):
    """Select a (sigma, weights) cell per mixed condition.

    Trains a CNN per candidate, measures per-attribute representational
    alignment, and picks the candidate maximizing
    ``min(enforced) - |enforced difference| - |unenforced|`` subject to the
    test-accuracy floor. Returns {condition_label: {"spec", "score",
    "accuracy", "rsa"}}; a condition with no candidate above the floor maps
    to None.
    """
    from . import metrics, training
    from .agents import VisionModule

    if weight_grid is None:
        weight_grid = [(round(w, 2), round(1 - w, 2)) for w in np.arange(0.05, 1.0, 0.05)]
    if pretrain_config is None:
        pretrain_config = training.PretrainConfig()
    results = {}
    n_trained = 0
    for pair in pairs:
        label = "-".join(pair)
        unenforced = next(a for a in world.ATTRIBUTES if a not in pair)
        best = None
        for sigma in sigma_grid:
            for weights in weight_grid:
                if budget is not None and n_trained >= budget:
                    break
                spec = SmoothingSpec("mixed", sigma, pair, weights)
                vision = VisionModule(dataset.height, dataset.width, seed=seed + n_trained)
                _, accuracy = training.pretrain_vision(
                    vision,
                    dataset,
                    spec,
                    pretrain_config,
                    np.random.default_rng(seed + n_trained),
                )
                n_trained += 1
                rsm = metrics.rsm_from_vision(
                    vision, dataset, per_class=pretrain_config.rsm_per_class, seed=seed
                )
                rsa = {
                    a: metrics.rsa(rsm, metrics.template_rsm(("single", a)))
                    for a in world.ATTRIBUTES
                }
                if accuracy < accuracy_floor:
                    continue
                enforced = [rsa[pair[0]], rsa[pair[1]]]
                score = min(enforced) - abs(enforced[0] - enforced[1]) - abs(rsa[unenforced])
                cell = {"spec": spec, "score": score, "accuracy": accuracy, "rsa": rsa}
                if best is None or score > best["score"]:
                    best = cell
        results[label] = best
    return results
