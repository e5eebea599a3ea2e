"""Evaluation metrics, confusion matrices and the rank-sum significance test."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def last_tag_accuracy(predicted: Sequence[int], gold: Sequence[int]) -> float:
    predicted = np.asarray(predicted)
    gold = np.asarray(gold)
    if predicted.shape != gold.shape:
        raise ValueError("prediction and gold lengths differ")
    if gold.size == 0:
        raise ValueError("no labeled targets to score")
    return float((predicted == gold).mean())


def confusion_matrix(predicted: Sequence[int], gold: Sequence[int], n_tags: int) -> np.ndarray:
    """Counts with gold tags on rows and predictions on columns."""
    cm = np.zeros((n_tags, n_tags), dtype=np.int64)
    np.add.at(cm, (np.asarray(gold, dtype=np.int64), np.asarray(predicted, dtype=np.int64)), 1)
    return cm


def confusion_subset(cm: np.ndarray, indices: Sequence[int]) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    return cm[np.ix_(idx, idx)]


def per_tag_scores(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(precision, recall, f1) per tag; 0 where undefined."""
    tp = np.diag(cm).astype(np.float64)
    pred = cm.sum(axis=0).astype(np.float64)
    gold = cm.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, pred, out=np.zeros_like(tp), where=pred > 0)
    recall = np.divide(tp, gold, out=np.zeros_like(tp), where=gold > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1


def matrix_csv(matrix: np.ndarray, row_labels: Sequence[str], col_labels: Sequence[str], corner: str = "") -> str:
    buf = io.StringIO()
    buf.write(",".join([corner, *col_labels]) + "\n")
    for label, row in zip(row_labels, matrix):
        cells = [str(int(v)) if np.issubdtype(matrix.dtype, np.integer) else f"{v:.6f}" for v in row]
        buf.write(",".join([label, *cells]) + "\n")
    return buf.getvalue()


@dataclass
class EvalReport:
    accuracy: float
    n: int
    confusion: np.ndarray
    tags: list[str]

    @classmethod
    def build(cls, predicted, gold, tags: Sequence[str]) -> "EvalReport":
        gold = np.asarray(gold)
        return cls(last_tag_accuracy(predicted, gold), int(gold.size),
                   confusion_matrix(predicted, gold, len(tags)), list(tags))

    def to_text(self) -> str:
        precision, recall, f1 = per_tag_scores(self.confusion)
        lines = [f"accuracy\t{self.accuracy:.6f}", f"targets\t{self.n}", "tag\tprecision\trecall\tf1\tsupport"]
        support = self.confusion.sum(axis=1)
        for i, tag in enumerate(self.tags):
            lines.append(f"{tag}\t{precision[i]:.4f}\t{recall[i]:.4f}\t{f1[i]:.4f}\t{support[i]}")
        return "\n".join(lines) + "\n"

    def confusion_csv(self, subset: Sequence[str] | None = None) -> str:
        names = list(subset) if subset else self.tags
        unknown = [t for t in names if t not in self.tags]
        if unknown:
            raise ValueError(f"unknown tags in subset: {', '.join(unknown)}")
        idx = [self.tags.index(t) for t in names]
        return matrix_csv(confusion_subset(self.confusion, idx), names, names, corner="gold\\pred")


@dataclass
class RankSumResult:
    u: float
    z: float
    p: float


def _rank(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Average ranks (1-based) and the sizes of tie groups."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(len(values))
    _, first, counts = np.unique(sorted_vals, return_index=True, return_counts=True)
    for start, c in zip(first, counts):
        ranks[order[start : start + c]] = start + (c + 1) / 2.0
    return ranks, counts


def rank_sum_test(x: Sequence[float], y: Sequence[float]) -> RankSumResult:
    """Two-sided Mann-Whitney U test via the tie-corrected normal approximation.

    No continuity correction. Returns U for ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n1, n2 = len(x), len(y)
    if n1 < 2 or n2 < 2:
        raise ValueError("each sample needs at least two values")
    ranks, ties = _rank(np.concatenate([x, y]))
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    n = n1 + n2
    mean = n1 * n2 / 2.0
    var = n1 * n2 / 12.0 * ((n + 1) - float((ties ** 3 - ties).sum()) / (n * (n - 1)))
    if var <= 0:
        return RankSumResult(u, 0.0, 1.0)
    z = (u - mean) / math.sqrt(var)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return RankSumResult(u, z, min(1.0, p))
