"""Imbalance-aware evaluation: F1, ROC/AUROC, PR/AUCPR and PAI@k over grid cells.

A cell is predicted hot when ``score >= m``. Curve areas are accumulated
with integer confusion counts and divided once at the end, so the ROC area
equals the Mann-Whitney statistic exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    """Metric undefined for the given input (e.g. a single class present)."""


@dataclass
class ScoredCells:
    score: np.ndarray
    label: np.ndarray
    future_count: np.ndarray
    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        self.score = np.asarray(self.score, dtype=float)
        self.label = np.asarray(self.label, dtype=np.int64)
        self.future_count = np.asarray(self.future_count, dtype=np.int64)
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        n = len(self.score)
        if not all(len(a) == n for a in (self.label, self.future_count, self.rows, self.cols)):
            raise ValueError("ScoredCells fields must have equal lengths")

    def __len__(self):
        return len(self.score)

    @classmethod
    def from_grids(cls, scores, counts, mask=None):
        """Collect masked-in cells of ``(p, p)`` score/count grids in row-major order."""
        scores = np.asarray(scores, dtype=float)
        counts = np.asarray(counts)
        mask = np.ones(scores.shape, bool) if mask is None else np.asarray(mask, bool)
        rows, cols = np.nonzero(mask)
        c = counts[rows, cols]
        return cls(scores[rows, cols], (c >= 1).astype(np.int64), c, rows, cols)

    @classmethod
    def from_labels(cls, scores, labels):
        """Convenience constructor when only labels matter (counts := labels)."""
        labels = np.asarray(labels, dtype=np.int64)
        n = len(labels)
        return cls(scores, labels, labels, np.arange(n), np.zeros(n, np.int64))


@dataclass
class Curve:
    x: np.ndarray
    y: np.ndarray
    thresholds: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "x", "y"])
            for t, x, y in zip(self.thresholds, self.x, self.y):
                w.writerow([repr(float(t)), repr(float(x)), repr(float(y))])


def confusion(scored, threshold):
    hot = scored.score >= threshold
    pos = scored.label == 1
    tp = int((hot & pos).sum())
    fp = int((hot & ~pos).sum())
    fn = int((~hot & pos).sum())
    tn = int((~hot & ~pos).sum())
    return tp, fp, tn, fn


def f1_from_counts(tp, fp, fn):
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def f1(scored, threshold=0.5):
    tp, fp, _, fn = confusion(scored, threshold)
    return f1_from_counts(tp, fp, fn)


def _sweep(scored):
    """Cumulative (tp, fp) at each distinct threshold, highest first."""
    order = np.argsort(-scored.score, kind="stable")
    s = scored.score[order]
    y = scored.label[order]
    tps = np.cumsum(y)
    fps = np.cumsum(1 - y)
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    return s[last], tps[last], fps[last]


def best_f1(scored):
    """``(threshold, f1)`` maximising F1 over all distinct score thresholds."""
    if len(scored) == 0:
        return 0.5, 0.0
    thr, tps, fps = _sweep(scored)
    npos = int(scored.label.sum())
    best = (0.5, 0.0)
    for m, tp, fp in zip(thr, tps, fps):
        val = f1_from_counts(int(tp), int(fp), npos - int(tp))
        if val > best[1]:
            best = (float(m), val)
    return best


def roc_auc(scored):
    npos = int(scored.label.sum())
    nneg = len(scored) - npos
    if npos == 0 or nneg == 0:
        raise MetricError("ROC undefined: need at least one hot and one cold cell")
    thr, tps, fps = _sweep(scored)
    tps = np.r_[0, tps].astype(np.int64)
    fps = np.r_[0, fps].astype(np.int64)
    # trapezoid area times 2*P*N, kept in integers
    twice = int(((fps[1:] - fps[:-1]) * (tps[1:] + tps[:-1])).sum())
    area = twice / (2 * npos * nneg)
    curve = Curve(fps / nneg, tps / npos, np.r_[np.inf, thr])
    return curve, area


def pr_auc(scored):
    npos = int(scored.label.sum())
    if npos == 0:
        raise MetricError("PR curve undefined: no hot cells")
    thr, tps, fps = _sweep(scored)
    recall = tps / npos
    precision = tps / (tps + fps)
    area = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    curve = Curve(np.r_[0.0, recall], np.r_[precision[0], precision], np.r_[np.inf, thr])
    return curve, area


def rank_cells(scored):
    """Indices ordered by score descending, then row, then column."""
    return np.lexsort((scored.cols, scored.rows, -scored.score))


def pai_at(scored, area_fraction=0.05):
    total = int(scored.future_count.sum())
    if total <= 0:
        raise MetricError("PAI undefined: no crimes in the evaluation horizon")
    n_cells = len(scored)
    n = max(1, math.floor(area_fraction * n_cells + 1e-9))
    chosen = rank_cells(scored)[:n]
    r = int(scored.future_count[chosen].sum())
    return (r / total) / (n / n_cells)


def oracle_pai_at(scored, area_fraction=0.05):
    """PAI of a clairvoyant ranking by true future counts."""
    ideal = ScoredCells(scored.future_count.astype(float), scored.label, scored.future_count,
                        scored.rows, scored.cols)
    return pai_at(ideal, area_fraction)


METRIC_NAMES = ("f1", "best_f1", "auroc", "aucpr", "pai5")


def evaluate(scored, threshold=0.5, rank_score=None):
    """All headline metrics for one anchor; undefined metrics come back as NaN.

    ``rank_score`` optionally replaces ``scored.score`` for the PAI cell
    ranking only (models with a count output rank by expected counts).
    """
    out = {"f1": f1(scored, threshold), "best_f1": best_f1(scored)[1]}
    try:
        out["auroc"] = roc_auc(scored)[1]
    except MetricError:
        out["auroc"] = float("nan")
    try:
        out["aucpr"] = pr_auc(scored)[1]
    except MetricError:
        out["aucpr"] = float("nan")
    try:
        ranked = scored if rank_score is None else ScoredCells(
            rank_score, scored.label, scored.future_count, scored.rows, scored.cols)
        out["pai5"] = pai_at(ranked, 0.05)
    except MetricError:
        out["pai5"] = float("nan")
    return out
