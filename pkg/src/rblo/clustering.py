"""K-means over embedding rows and external cluster-agreement metrics.

The metrics (accuracy by optimal class matching, NMI, adjusted Rand index,
pairwise F1) are implemented from the contingency table with integer pair
counts, so they agree exactly with brute-force pair enumeration.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .manifold import Rng

KMEANS_RESTARTS = 10
KMEANS_MAX_ITERS = 300


class LabelVector:
    """Integer cluster labels in [0, c)."""

    def __init__(self, labels, c: int):
        labels = np.asarray(labels, dtype=int)
        if labels.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if c < 1 or (labels.size and (labels.min() < 0 or labels.max() >= c)):
            raise ValueError(f"labels must lie in [0, {c})")
        self.labels = labels
        self.c = int(c)

    def __len__(self):
        return self.labels.size


def _as_label_array(x) -> np.ndarray:
    if isinstance(x, LabelVector):
        return x.labels
    arr = np.asarray(x, dtype=int)
    if arr.ndim != 1:
        raise ValueError("labels must be one-dimensional")
    return arr


def _contingency(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Counts n[p, t] of points with predicted class p and true class t."""
    cp = int(pred.max()) + 1 if pred.size else 1
    ct = int(truth.max()) + 1 if truth.size else 1
    table = np.zeros((cp, ct), dtype=np.int64)
    np.add.at(table, (pred, truth), 1)
    return table


def _check_pair(pred, truth):
    pred = _as_label_array(pred)
    truth = _as_label_array(truth)
    if pred.size != truth.size:
        raise ValueError(f"label lengths differ: {pred.size} vs {truth.size}")
    if pred.size == 0:
        raise ValueError("empty label vectors")
    return pred, truth


def _comb2(counts) -> int:
    c = np.asarray(counts, dtype=np.int64).ravel()
    return int(np.sum(c * (c - 1) // 2))


# ------------------------------------------------------------------------
# metrics
# ------------------------------------------------------------------------

def accuracy(pred, truth) -> float:
    """Best fraction of agreeing labels over all one-to-one class matchings."""
    pred, truth = _check_pair(pred, truth)
    table = _contingency(pred, truth)
    rows, cols = linear_sum_assignment(table.max() - table)
    return float(table[rows, cols].sum()) / pred.size


def nmi(pred, truth) -> float:
    """Mutual information over the arithmetic mean of entropies, natural log.

    Convention when either marginal entropy is zero: 1.0 if the two
    partitions are identical, else 0.0.
    """
    pred, truth = _check_pair(pred, truth)
    table = _contingency(pred, truth).astype(float)
    n = pred.size
    joint = table / n
    pp = joint.sum(axis=1)
    pt = joint.sum(axis=0)
    hp = -np.sum(pp[pp > 0] * np.log(pp[pp > 0]))
    ht = -np.sum(pt[pt > 0] * np.log(pt[pt > 0]))
    if hp == 0.0 or ht == 0.0:
        # identical partitions (ignoring unused class ids): after dropping
        # empty rows/columns, exactly one nonzero cell per row and column
        nz = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
        identical = (nz.shape[0] == nz.shape[1]
                     and np.all((nz != 0).sum(axis=0) == 1)
                     and np.all((nz != 0).sum(axis=1) == 1))
        return 1.0 if identical else 0.0
    mask = joint > 0
    outer = np.outer(pp, pt)
    mi = float(np.sum(joint[mask] * np.log(joint[mask] / outer[mask])))
    return float(min(max(mi / (0.5 * (hp + ht)), 0.0), 1.0))


def ari(pred, truth) -> float:
    """Adjusted Rand index: pair-count index with expected-index correction."""
    pred, truth = _check_pair(pred, truth)
    table = _contingency(pred, truth)
    n = pred.size
    index = _comb2(table)
    sum_p = _comb2(table.sum(axis=1))
    sum_t = _comb2(table.sum(axis=0))
    total = n * (n - 1) // 2
    expected = sum_p * sum_t / total
    max_index = 0.5 * (sum_p + sum_t)
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def pairwise_f1(pred, truth) -> float:
    """F1 over co-clustered pairs.

    precision = |pairs together in both| / |pairs together in pred|,
    recall uses truth pairs. No co-clustered pairs on either side means
    both partitions are all-singletons (identical), scored 1.0; truth
    pairs with none recovered score 0.0.
    """
    pred, truth = _check_pair(pred, truth)
    table = _contingency(pred, truth)
    tp = _comb2(table)
    pred_pairs = _comb2(table.sum(axis=1))
    truth_pairs = _comb2(table.sum(axis=0))
    if pred_pairs == 0 and truth_pairs == 0:
        return 1.0
    if tp == 0:
        return 0.0
    precision = tp / pred_pairs
    recall = tp / truth_pairs
    return float(2.0 * precision * recall / (precision + recall))


def matched_macro_f1(pred, truth) -> float:
    """Macro-averaged per-class F1 after optimal class matching.

    Alternative to pairwise_f1 for comparison tables; truth classes left
    unmatched (more truth classes than predicted ones) contribute 0.
    """
    pred, truth = _check_pair(pred, truth)
    table = _contingency(pred, truth)
    rows, cols = linear_sum_assignment(table.max() - table)
    n_truth_classes = table.shape[1]
    scores = np.zeros(n_truth_classes)
    for p, t in zip(rows, cols):
        tp = table[p, t]
        fp = table[p, :].sum() - tp
        fn = table[:, t].sum() - tp
        if tp > 0:
            prec = tp / (tp + fp)
            rec = tp / (tp + fn)
            scores[t] = 2.0 * prec * rec / (prec + rec)
    return float(scores.mean())


# ------------------------------------------------------------------------
# k-means
# ------------------------------------------------------------------------

def _normalize_rows(points: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(points, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return points / safe


def _kmeanspp_init(points: np.ndarray, c: int, rng: Rng) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((c, points.shape[1]))
    first = rng.integers(0, n)
    centers[0] = points[first]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, c):
        total = d2.sum()
        if total <= 0.0:
            idx = int(np.argmax(d2))  # all mass at distance 0: lowest index
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        centers[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def _lloyd(points: np.ndarray, centers: np.ndarray, max_iters: int):
    n, c = points.shape[0], centers.shape[0]
    labels = np.full(n, -1, dtype=int)
    for _ in range(max_iters):
        d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)  # argmin breaks ties at lowest index
        point_d2 = d2[np.arange(n), new_labels]
        for j in range(c):
            members = new_labels == j
            if members.any():
                centers[j] = points[members].mean(axis=0)
            else:
                # re-seed an empty cluster from the currently farthest point
                far = int(np.argmax(point_d2))
                centers[j] = points[far]
                new_labels[far] = j
                point_d2[far] = -1.0
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    return labels, inertia


def kmeans(points, c: int, rng: Rng, restarts: int = KMEANS_RESTARTS,
           max_iters: int = KMEANS_MAX_ITERS, normalize: bool = True) -> LabelVector:
    """Cluster embedding rows with restarted k-means++ / Lloyd iterations.

    Rows are L2-normalized first (disable with normalize=False). Restart r
    uses the derived seed rng.seed + r; the best run by inertia wins, ties
    going to the lowest restart index. Deterministic for a fixed seed.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be an n-by-k matrix")
    n = points.shape[0]
    if c > n:
        raise ValueError(f"cannot form {c} clusters from {n} points")
    if c < 1:
        raise ValueError("need at least one cluster")
    if normalize:
        points = _normalize_rows(points)
    best_labels, best_inertia = None, np.inf
    for r in range(max(1, restarts)):
        sub = Rng(rng.seed + r)
        centers = _kmeanspp_init(points, c, sub)
        labels, inertia = _lloyd(points, centers.copy(), max_iters)
        if inertia < best_inertia:
            best_labels, best_inertia = labels, inertia
    return LabelVector(best_labels, c)
