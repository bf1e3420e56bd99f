"""Clustering and classification evaluation: k-means, matched accuracy, NMI."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ContractError, ShapeError

KMEANS_MAX_ITER = 300
KMEANS_RESTARTS = 10


@dataclass
class ClusterResult:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = np.sum(x * x, axis=1)[:, None] - 2.0 * x @ c.T + np.sum(c * c, axis=1)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    closest = _sq_dists(x, centers[0][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # every point already coincides with a centre; any row will do
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers.append(x[idx])
        closest = np.minimum(closest, _sq_dists(x, x[idx][None, :])[:, 0])
    return np.array(centers)


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int) -> ClusterResult:
    k = centers.shape[0]
    assign = None
    prev_inertia = np.inf
    for _ in range(max_iter):
        d = _sq_dists(x, centers)
        new_assign = np.argmin(d, axis=1)
        inertia = float(d[np.arange(x.shape[0]), new_assign].sum())
        # assignment step never increases the objective
        assert inertia <= prev_inertia * (1 + 1e-12) + 1e-12, "k-means inertia increased"
        prev_inertia = inertia
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = x[assign == j]
            if members.shape[0]:
                centers[j] = members.mean(axis=0)
    assign = np.argmin(_sq_dists(x, centers), axis=1)
    diff = x - centers[assign]
    inertia = float(np.sum(diff * diff))
    return ClusterResult(assign.astype(np.int64), centers, inertia)


def kmeans(x, k: int, seed: int = 0, restarts: int = KMEANS_RESTARTS,
           max_iter: int = KMEANS_MAX_ITER) -> ClusterResult:
    """Best-inertia Lloyd run over ``restarts`` k-means++ initializations."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("kmeans expects a 2-D matrix")
    if not 1 <= k <= x.shape[0]:
        raise ContractError(f"k = {k} must lie in [1, {x.shape[0]}]")
    best = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        res = _lloyd(x, _kmeanspp(x, k, rng), max_iter)
        if best is None or res.inertia < best.inertia:
            best = res
    return best


def _check_pair(pred, truth):
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ShapeError(f"label vectors differ in shape: {pred.shape} vs {truth.shape}")
    return pred, truth


def _contingency(pred, truth):
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1))
    np.add.at(table, (p, t), 1.0)
    return table


def clustering_accuracy(pred, truth) -> float:
    """Fraction matched under the best one-to-one mapping of cluster ids to classes."""
    pred, truth = _check_pair(pred, truth)
    if pred.size == 0:
        raise ContractError("empty label vectors")
    table = _contingency(pred, truth)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / pred.size)


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth) -> float:
    """Mutual information over the arithmetic mean of the two entropies (0/0 -> 0)."""
    pred, truth = _check_pair(pred, truth)
    if pred.size == 0:
        raise ContractError("empty label vectors")
    table = _contingency(pred, truth)
    n = table.sum()
    hp, ht = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    nz = table > 0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    mi = float(np.sum(table[nz] / n * np.log(table[nz] * n / outer[nz])))
    denom = 0.5 * (hp + ht)
    if denom <= 0.0:
        return 0.0
    return float(np.clip(mi / denom, 0.0, 1.0))


def classification_accuracy(logits_or_labels, truth, index_set) -> float:
    """Accuracy of argmax predictions (lowest index wins ties) over ``index_set``."""
    idx = np.asarray(index_set, dtype=np.int64)
    if idx.size == 0:
        raise ContractError("empty index set")
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(logits_or_labels)
    if pred.ndim == 2:
        pred = np.argmax(pred, axis=1)
    if pred.shape[0] != truth.shape[0]:
        raise ShapeError("predictions and labels differ in length")
    if idx.min() < 0 or idx.max() >= truth.shape[0]:
        raise ContractError("index outside the label vector")
    return float(np.mean(pred[idx] == truth[idx]))


def metrics_report(acc=None, nmi_value=None, test_acc=None, seeds=(), config_hash="") -> str:
    """Single-line JSON report with a fixed key order."""
    return json.dumps({"acc": acc, "nmi": nmi_value, "test_acc": test_acc,
                       "seeds": list(seeds), "config_hash": config_hash})
