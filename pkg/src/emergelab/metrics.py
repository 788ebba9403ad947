"""Perceptual-bias (RSA) and linguistic-bias (entropy/effectiveness) metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import world


# ---------------------------------------------------------------------------
# Representational similarity analysis


def rsm_from_representations(reps: np.ndarray) -> np.ndarray:
    """RSM from a (64, N, D) block of per-class representations.

    Entry (i, j), i != j, is the mean cosine similarity over all N*N cross
    pairs; the diagonal averages the N*(N-1)/2 distinct within-class pairs.
    """
    n_classes, n, _ = reps.shape
    norms = np.linalg.norm(reps, axis=2, keepdims=True)
    units = reps / np.maximum(norms, 1e-12)
    # Mean cosine over cross pairs equals the dot product of mean unit vectors.
    mean_units = units.mean(axis=1)  # (64, D)
    rsm = mean_units @ mean_units.T
    sums = units.sum(axis=1)
    diag = (np.einsum("cd,cd->c", sums, sums) - n) / (n * (n - 1))
    np.fill_diagonal(rsm, diag)
    return rsm


def rsm_from_vision(vision, dataset, per_class: int = 50, seed: int = 0) -> np.ndarray:
    """RSM of a vision module's representations over dataset examples."""
    rng = np.random.default_rng(seed)
    by_class = [np.flatnonzero(dataset.class_ids == c) for c in range(world.N_CLASSES)]
    reps = np.empty((world.N_CLASSES, per_class, vision.REP_DIM))
    for c, items in enumerate(by_class):
        if len(items) == 0:
            raise ValueError(f"class {c} missing from dataset")
        chosen = rng.choice(items, size=per_class, replace=len(items) < per_class)
        reps[c] = vision.representations(dataset.images[chosen])
    return rsm_from_representations(reps)


def template_rsm(mode) -> np.ndarray:
    """Attribute-encoding template RSM.

    ``mode`` is "khot" (3-hot over all attribute values) or
    ("single", attribute) (one-hot over that attribute's values).
    """
    table = world.class_attribute_table()
    if mode == "khot":
        enc = np.zeros((world.N_CLASSES, 12))
        for c in range(world.N_CLASSES):
            for a in range(3):
                enc[c, 4 * a + table[c, a]] = 1.0
    else:
        kind, attribute = mode
        if kind != "single":
            raise ValueError(f"unknown template mode {mode!r}")
        col = world.ATTRIBUTES.index(attribute)
        enc = np.zeros((world.N_CLASSES, 4))
        for c in range(world.N_CLASSES):
            enc[c, table[c, col]] = 1.0
    units = enc / np.linalg.norm(enc, axis=1, keepdims=True)
    return units @ units.T


def spearman(x, y) -> float:
    """Spearman rho: Pearson correlation of average ranks (NaN if degenerate)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need two equal-length sequences of length >= 3")
    rx = rankdata(x)
    ry = rankdata(y)
    if rx.std() == 0 or ry.std() == 0:
        return float("nan")
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    return float(rx @ ry / np.sqrt((rx @ rx) * (ry @ ry)))


def rsa(rsm_a: np.ndarray, rsm_b: np.ndarray) -> float:
    """Spearman correlation over the strictly-upper-triangle entries."""
    iu = np.triu_indices(rsm_a.shape[0], k=1)
    return spearman(rsm_a[iu], rsm_b[iu])


def attribute_rsa_scores(rsm: np.ndarray) -> dict[str, float]:
    """Per-attribute and overall RSA scores against the standard templates."""
    scores = {a: rsa(rsm, template_rsm(("single", a))) for a in world.ATTRIBUTES}
    scores["overall"] = rsa(rsm, template_rsm("khot"))
    return scores


# ---------------------------------------------------------------------------
# Information-theoretic quantities (plug-in estimators, base 2)


def _xlogx(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    mask = p > 0
    out[mask] = p[mask] * np.log2(p[mask])
    return out


def entropy(counts) -> float:
    """Shannon entropy in bits from (possibly unnormalized) counts."""
    p = np.asarray(counts, dtype=float).ravel()
    p = p / p.sum()
    return float(-_xlogx(p).sum())


def conditional_entropy(joint) -> float:
    """H(X | Y) from a joint count array with X on axis 0, Y on axis 1."""
    p = np.asarray(joint, dtype=float)
    p = p / p.sum()
    py = p.sum(axis=0)
    return float(-(_xlogx(p).sum() - _xlogx(py).sum()))


def mutual_information(joint) -> float:
    """I(X, Y) = H(X) - H(X | Y)."""
    p = np.asarray(joint, dtype=float)
    return entropy(p.sum(axis=1)) - conditional_entropy(p)


def conditional_mi(joint3) -> float:
    """I(X, Y | Z) from counts p[x, y, z]."""
    p = np.asarray(joint3, dtype=float)
    p = p / p.sum()
    pz = p.sum(axis=(0, 1))
    pxz = p.sum(axis=1)
    pyz = p.sum(axis=0)
    total = 0.0
    nx, ny, nz = p.shape
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if p[x, y, z] > 0:
                    total += p[x, y, z] * np.log2(
                        pz[z] * p[x, y, z] / (pxz[x, z] * pyz[y, z])
                    )
    return float(total)


def interaction_information(joint3) -> float:
    """I(X, Y, Z) = I(X, Y) - I(X, Y | Z)."""
    p = np.asarray(joint3, dtype=float)
    return mutual_information(p.sum(axis=2)) - conditional_mi(p)


def conditional_entropy3(joint3) -> float:
    """H(X | Y, Z) from counts p[x, y, z]."""
    p = np.asarray(joint3, dtype=float)
    p = p / p.sum()
    pyz = p.sum(axis=0)
    return float(-(_xlogx(p).sum() - _xlogx(pyz).sum()))


# ---------------------------------------------------------------------------
# Message logs and effectiveness


@dataclass
class MessageLog:
    """Per-round records of (target class, message, selected class, reward)."""

    targets: list = field(default_factory=list)
    messages: list = field(default_factory=list)  # tuples of symbols
    selections: list = field(default_factory=list)
    rewards: list = field(default_factory=list)

    def append(self, target: int, message, selection: int, reward: int) -> None:
        self.targets.append(int(target))
        self.messages.append(tuple(int(s) for s in message))
        self.selections.append(int(selection))
        self.rewards.append(int(reward))

    def __len__(self) -> int:
        return len(self.targets)

    def mean_reward(self) -> float:
        return float(np.mean(self.rewards))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["round", "target_class", "message", "selected_class", "reward"])
            for i in range(len(self)):
                w.writerow(
                    [
                        i,
                        self.targets[i],
                        "-".join(str(s) for s in self.messages[i]),
                        self.selections[i],
                        self.rewards[i],
                    ]
                )

    @classmethod
    def load_csv(cls, path) -> "MessageLog":
        log = cls()
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            for row in reader:
                log.append(
                    int(row["target_class"]),
                    tuple(int(s) for s in row["message"].split("-")),
                    int(row["selected_class"]),
                    int(row["reward"]),
                )
        return log


def _message_indices(messages) -> tuple[np.ndarray, int]:
    uniq = sorted(set(messages))
    lookup = {m: i for i, m in enumerate(uniq)}
    return np.array([lookup[m] for m in messages]), len(uniq)


def joint_counts(xs, ys, nx: int | None = None) -> np.ndarray:
    """Joint count matrix of two integer sequences."""
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    nx = nx or int(xs.max()) + 1
    ny = int(ys.max()) + 1
    joint = np.zeros((nx, ny))
    np.add.at(joint, (xs, ys), 1.0)
    return joint


def triple_counts(xs, ys, zs) -> np.ndarray:
    xs, ys, zs = (np.asarray(v) for v in (xs, ys, zs))
    joint = np.zeros((int(xs.max()) + 1, int(ys.max()) + 1, int(zs.max()) + 1))
    np.add.at(joint, (xs, ys, zs), 1.0)
    return joint


def log_information_report(log: MessageLog) -> dict[str, float]:
    """Entropies and the three-way decomposition of an evaluation log."""
    msg_idx, _ = _message_indices(log.messages)
    targets = np.asarray(log.targets)
    selections = np.asarray(log.selections)
    j_om = joint_counts(targets, msg_idx)
    j_sm = joint_counts(selections, msg_idx)
    j3 = triple_counts(targets, selections, msg_idx)
    return {
        "H_O": entropy(j_om.sum(axis=1)),
        "H_M": entropy(j_om.sum(axis=0)),
        "H_O_given_M": conditional_entropy(j_om),
        "H_S_given_M": conditional_entropy(j_sm),
        "I_O_M": mutual_information(j_om),
        "I_S_M": mutual_information(j_sm),
        "I_O_S_given_M": conditional_mi(j3),
        "interaction_O_S_M": interaction_information(j3),
    }


def effectiveness(log: MessageLog, projection: str = "all") -> float:
    """E = 1 - H(O | M) / H(O), optionally projecting targets to one attribute."""
    if projection == "all":
        targets = np.asarray(log.targets)
    else:
        targets = np.array([world.attribute_value(t, projection) for t in log.targets])
    msg_idx, _ = _message_indices(log.messages)
    joint = joint_counts(targets, msg_idx)
    h_o = entropy(joint.sum(axis=1))
    if h_o == 0:
        return float("nan")
    return 1.0 - conditional_entropy(joint) / h_o


def average_effectiveness(log: MessageLog) -> float:
    """Mean of the three per-attribute effectiveness scores."""
    return float(np.mean([effectiveness(log, a) for a in world.ATTRIBUTES]))


# ---------------------------------------------------------------------------
# Bootstrap confidence intervals


@dataclass(frozen=True)
class BootstrapCI:
    estimate: float
    lower: float
    upper: float
    level: float = 0.95
    resamples: int = 10000


def bootstrap_ci(
    samples,
    statistic: str = "mean",
    level: float = 0.95,
    resamples: int = 10000,
    seed: int = 0,
) -> BootstrapCI:
    """Percentile bootstrap for a mean or a difference of means.

    For ``diff_of_means``, ``samples`` is a pair (a, b) and the statistic is
    mean(a) - mean(b).
    """
    rng = np.random.default_rng(seed)
    alpha = (1.0 - level) / 2
    if statistic == "mean":
        a = np.asarray(samples, dtype=float)
        point = float(a.mean())
        idx = rng.integers(0, len(a), size=(resamples, len(a)))
        stats = a[idx].mean(axis=1)
    elif statistic == "diff_of_means":
        a = np.asarray(samples[0], dtype=float)
        b = np.asarray(samples[1], dtype=float)
        point = float(a.mean() - b.mean())
        ia = rng.integers(0, len(a), size=(resamples, len(a)))
        ib = rng.integers(0, len(b), size=(resamples, len(b)))
        stats = a[ia].mean(axis=1) - b[ib].mean(axis=1)
    else:
        raise ValueError(f"unknown statistic {statistic!r}")
    lower, upper = np.quantile(stats, [alpha, 1.0 - alpha])
    return BootstrapCI(point, float(lower), float(upper), level, resamples)


# ---------------------------------------------------------------------------
# RSM export


def save_rsm_csv(rsm: np.ndarray, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        for row in rsm:
            w.writerow([f"{v:.9f}" for v in row])


def save_rsm_pgm(rsm: np.ndarray, path) -> None:
    """8-bit grayscale PGM heatmap, mapping [-1, 1] to [0, 255]."""
    gray = np.clip((rsm + 1.0) / 2.0 * 255.0, 0, 255).astype(np.uint8)
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(gray.tobytes())
