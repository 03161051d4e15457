"""Clustering accuracy (ACC) via optimal one-to-one cluster-to-label
mapping, plus run summaries."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment


def contingency(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """K x C count matrix of (cluster index, class label) co-occurrences."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError("pred and truth must be equal-length 1-D arrays")
    if pred.size == 0:
        raise ValueError("empty input")
    k = int(pred.max()) + 1
    c = int(truth.max()) + 1
    table = np.zeros((k, c), dtype=np.int64)
    np.add.at(table, (pred, truth), 1)
    return table


def acc_hungarian(table: np.ndarray) -> float:
    """Optimal-assignment ACC on a contingency table."""
    row, col = linear_sum_assignment(table, maximize=True)
    return float(table[row, col].sum() / table.sum())


def acc_exhaustive(table: np.ndarray) -> float:
    """Brute-force ACC over all one-to-one mappings; oracle for small K."""
    k, c = table.shape
    n = table.sum()
    if k <= c:
        best = max(sum(table[i, perm[i]] for i in range(k))
                   for perm in permutations(range(c), k))
    else:
        best = max(sum(table[perm[j], j] for j in range(c))
                   for perm in permutations(range(k), c))
    return float(best / n)


def clustering_accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of samples correct under the best one-to-one mapping between
    cluster indices and class labels.

    Exhaustive permutation when K <= 8 (doubles as the oracle), Hungarian
    assignment above. When K != C the mapping covers min(K, C) and the
    remainder counts as wrong.
    """
    table = contingency(pred, truth)
    if table.shape[0] <= 8:
        return acc_exhaustive(table)
    return acc_hungarian(table)


@dataclass
class RunSummary:
    final_acc: float | None
    best_acc: float | None
    best_acc_iteration: int | None
    final_disc_objective: float
    final_enc_objective: float
    iterations: int

    def to_dict(self) -> dict:
        return {
            "final_acc": self.final_acc,
            "best_acc": self.best_acc,
            "best_acc_iteration": self.best_acc_iteration,
            "final_disc_objective": self.final_disc_objective,
            "final_enc_objective": self.final_enc_objective,
            "iterations": self.iterations,
        }


def summarize_run(history) -> RunSummary:
    """Reduce a run history to its final/best statistics."""
    records = history.records if hasattr(history, "records") else list(history)
    if not records:
        raise ValueError("empty history")
    last = records[-1]
    accs = [(r.iteration, r.acc) for r in records if r.acc is not None]
    if accs:
        best_it, best = max(accs, key=lambda t: (t[1], -t[0]))
        final_acc = accs[-1][1]
    else:
        best_it, best, final_acc = None, None, None
    return RunSummary(
        final_acc=final_acc,
        best_acc=best,
        best_acc_iteration=best_it,
        final_disc_objective=last.disc_objective,
        final_enc_objective=last.enc_objective,
        iterations=len(records),
    )
