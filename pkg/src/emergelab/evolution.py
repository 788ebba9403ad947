"""Payoff matrices from pairwise training outcomes and pure-ESS detection."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics

EQ_TOL = 1e-9


@dataclass
class PayoffTable:
    """Directed mean rewards with per-cell run samples."""

    types: list[str]
    samples: dict = field(default_factory=dict)  # (sender, receiver) -> [rewards]

    def add(self, sender_type: str, receiver_type: str, reward: float) -> None:
        self.samples.setdefault((sender_type, receiver_type), []).append(float(reward))

    def mean(self, sender_type: str, receiver_type: str) -> float:
        return float(np.mean(self.samples[(sender_type, receiver_type)]))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["sender_type", "receiver_type", "run", "reward"])
            for s in self.types:
                for r in self.types:
                    for k, value in enumerate(self.samples.get((s, r), [])):
                        w.writerow([s, r, k, f"{value:.10g}"])

    @classmethod
    def load_csv(cls, path) -> "PayoffTable":
        table = cls(types=[])
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                if row["sender_type"] not in table.types:
                    table.types.append(row["sender_type"])
                table.add(row["sender_type"], row["receiver_type"], float(row["reward"]))
        return table


@dataclass
class SymmetricPayoff:
    types: list[str]
    matrix: np.ndarray  # (T, T), symmetric


def symmetrize(table: PayoffTable) -> SymmetricPayoff:
    """M[t][t'] = (r[t][t'] + r[t'][t]) / 2 over cell means."""
    n = len(table.types)
    m = np.empty((n, n))
    for i, t in enumerate(table.types):
        for j, u in enumerate(table.types):
            m[i, j] = (table.mean(t, u) + table.mean(u, t)) / 2.0
    return SymmetricPayoff(list(table.types), m)


@dataclass
class ESSReport:
    types: list[str]
    is_ess: dict  # type -> bool
    condition: dict  # type -> "strict" | "tie_breaker" | None
    significant: dict = field(default_factory=dict)  # type -> bool | None

    def to_json(self) -> str:
        return json.dumps(
            {
                "types": self.types,
                "is_ess": {t: bool(v) for t, v in self.is_ess.items()},
                "condition": self.condition,
                "significant": {
                    t: (None if v is None else bool(v))
                    for t, v in self.significant.items()
                },
            },
            indent=2,
            sort_keys=True,
        )


def find_pure_ess(payoff: SymmetricPayoff, tol: float = EQ_TOL) -> ESSReport:
    """Pure-strategy ESS check.

    Type t is an ESS iff for every other type t': M[t][t] > M[t'][t], or the
    two are equal (within tol) and M[t][t'] > M[t'][t'].
    """
    m = payoff.matrix
    if m.shape[0] != m.shape[1]:
        raise ValueError("payoff matrix must be square")
    is_ess, condition = {}, {}
    for i, t in enumerate(payoff.types):
        strict_everywhere = True
        ok = True
        for j in range(m.shape[0]):
            if j == i:
                continue
            if m[i, i] > m[j, i] + tol:
                continue
            strict_everywhere = False
            if abs(m[i, i] - m[j, i]) <= tol and m[i, j] > m[j, j] + tol:
                continue
            ok = False
            break
        is_ess[t] = ok
        condition[t] = None if not ok else ("strict" if strict_everywhere else "tie_breaker")
    return ESSReport(list(payoff.types), is_ess, condition)


def _symmetrized_cell_samples(table: PayoffTable, t: str, u: str) -> list[float]:
    if t == u:
        return list(table.samples[(t, t)])
    return list(table.samples[(t, u)]) + list(table.samples[(u, t)])


def significance_by_column(
    table: PayoffTable,
    resamples: int = 10000,
    level: float = 0.95,
    seed: int = 0,
) -> dict:
    """Bootstrap CI comparisons within each column of the symmetrized matrix.

    For each column t and each other type t', reports whether the CI of
    M[t][t] - M[t'][t] excludes 0. An ESS candidate is significant when all
    its column comparisons exclude 0.
    """
    out = {}
    for t in table.types:
        own = _symmetrized_cell_samples(table, t, t)
        comparisons = {}
        for u in table.types:
            if u == t:
                continue
            other = _symmetrized_cell_samples(table, u, t)
            ci = metrics.bootstrap_ci(
                (own, other), "diff_of_means", level, resamples, seed
            )
            comparisons[u] = {
                "ci": ci,
                "excludes_zero": bool(ci.lower > 0 or ci.upper < 0),
            }
        out[t] = comparisons
    return out


def annotate_significance(
    report: ESSReport, table: PayoffTable, resamples: int = 10000,
    level: float = 0.95, seed: int = 0,
) -> ESSReport:
    column_stats = significance_by_column(table, resamples, level, seed)
    for t in report.types:
        if not report.is_ess[t]:
            report.significant[t] = None
        else:
            report.significant[t] = all(
                c["excludes_zero"] and c["ci"].lower > 0
                for c in column_stats[t].values()
            )
    return report


# ---------------------------------------------------------------------------
# Tournament

_WORKER_STATE: dict = {}


def _init_worker(payload):
    _WORKER_STATE.update(payload)


def _run_cell(task):
    from . import training

    sender_type, receiver_type, run, seed = task
    st = _WORKER_STATE
    reward, _, _ = training.train_pair_frozen(
        st["weights"][sender_type],
        st["weights"][receiver_type],
        st["dataset"],
        st["game_config"],
        st["train_config"],
        seed,
    )
    return sender_type, receiver_type, run, reward


def run_tournament(
    bias_types: list[str],
    vision_weights: dict,
    dataset,
    game_config,
    train_config,
    runs_per_pair: int = 5,
    seed: int = 0,
    workers: int = 1,
) -> PayoffTable:
    """Frozen-vision training for every ordered (sender, receiver) type pair.

    ``vision_weights`` maps type name to a pretrained parameter dict.
    Per-cell seeds derive deterministically from the master seed; failed
    cells are recorded and excluded with a warning.
    """
    tasks = []
    for i, s in enumerate(bias_types):
        for j, r in enumerate(bias_types):
            for run in range(runs_per_pair):
                cell_seed = int(
                    np.random.SeedSequence(seed, spawn_key=(i, j, run)).generate_state(1)[0]
                )
                tasks.append((s, r, run, cell_seed))
    payload = {
        "weights": vision_weights,
        "dataset": dataset,
        "game_config": game_config,
        "train_config": train_config,
    }
    table = PayoffTable(types=list(bias_types))
    results = []
    if workers <= 1:
        _init_worker(payload)
        for task in tasks:
            try:
                results.append(_run_cell(task))
            except Exception as exc:  # noqa: BLE001
                print(f"warning: tournament cell {task[:3]} failed: {exc}")
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(payload,)
        ) as pool:
            futures = [pool.submit(_run_cell, task) for task in tasks]
            for task, fut in zip(tasks, futures):
                try:
                    results.append(fut.result())
                except Exception as exc:  # noqa: BLE001
                    print(f"warning: tournament cell {task[:3]} failed: {exc}")
    results.sort(key=lambda r: (bias_types.index(r[0]), bias_types.index(r[1]), r[2]))
    for sender_type, receiver_type, _, reward in results:
        table.add(sender_type, receiver_type, reward)
    return table
