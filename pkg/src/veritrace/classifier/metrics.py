"""Evaluation metrics: AUC, ROC points, confusion matrix, classification report."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import VeritraceError
from .dataset import CODE_TO_LABEL


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Pairwise-concordance AUC: (#(s_pos > s_neg) + 0.5 * #ties) / (n_pos * n_neg).

    Computed via average ranks, equivalent to the O(n^2) pair count.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape[0] != y.shape[0]:
        raise VeritraceError("scores and labels must have equal length")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise VeritraceError("both labels must be present")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.shape[0])
    sorted_s = s[order]
    i = 0
    while i < s.shape[0]:
        j = i
        while j + 1 < s.shape[0] and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    rank_sum_pos = float(ranks[y == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_points(scores: Sequence[float], labels: Sequence[int]) -> list[tuple[float, float, float]]:
    """(fpr, tpr, threshold) triples, thresholds descending over unique scores.

    The leading point (0, 0) carries threshold +inf.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise VeritraceError("both labels must be present")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    points = [(0.0, 0.0, float("inf"))]
    tp = 0
    fp = 0
    i = 0
    n = s.shape[0]
    while i < n:
        thr = s_sorted[i]
        while i < n and s_sorted[i] == thr:
            if y_sorted[i] == 1:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append((fp / n_neg, tp / n_pos, float(thr)))
    return points


@dataclass
class EvalReport:
    """Holdout evaluation summary with per-class metrics and ROC."""

    accuracy: float
    per_class: dict  # label -> {precision, recall, f1, support}
    confusion: list[list[int]]  # rows true [fact, hallucination], cols predicted
    auc_hallucination: float
    auc_fact: float
    roc: list[tuple[float, float, float]]
    threshold: float
    n: int
    meta: dict = field(default_factory=dict)

    def to_json(self, indent=None) -> str:
        payload = {
            "accuracy": self.accuracy,
            "per_class": self.per_class,
            "confusion": self.confusion,
            "auc": {"hallucination": self.auc_hallucination, "fact": self.auc_fact},
            "threshold": self.threshold,
            "n": self.n,
            "meta": self.meta,
        }
        return json.dumps(payload, indent=indent, sort_keys=True)

    def to_text(self) -> str:
        lines = [
            f"{'class':<14}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>10}",
        ]
        for label in ("fact", "hallucination"):
            m = self.per_class[label]
            lines.append(
                f"{label:<14}{m['precision']:>10.3f}{m['recall']:>10.3f}"
                f"{m['f1']:>10.3f}{m['support']:>10d}"
            )
        lines.append("")
        lines.append(f"{'accuracy':<14}{self.accuracy:>10.3f}{'':>20}{self.n:>10d}")
        lines.append(
            f"{'auc':<14}{self.auc_hallucination:>10.3f}  (hallucination as positive)"
        )
        lines.append("confusion matrix (rows true, cols predicted) [fact, hallucination]:")
        for row in self.confusion:
            lines.append(f"  {row}")
        return "\n".join(lines)

    def roc_csv(self) -> str:
        out = ["fpr,tpr,threshold"]
        for fpr, tpr, thr in self.roc:
            out.append(f"{fpr!r},{tpr!r},{thr!r}")
        return "\n".join(out) + "\n"


def build_report(
    scores: Sequence[float],
    labels: Sequence[int],
    threshold: float = 0.5,
    meta: dict | None = None,
) -> EvalReport:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape[0] == 0:
        raise VeritraceError("empty test set")
    pred = (s >= threshold).astype(np.int64)
    confusion = [[0, 0], [0, 0]]
    for truth, p in zip(y, pred):
        confusion[int(truth)][int(p)] += 1
    per_class = {}
    for code in (0, 1):
        tp = confusion[code][code]
        fp = confusion[1 - code][code]
        fn = confusion[code][1 - code]
        support = confusion[code][0] + confusion[code][1]
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[CODE_TO_LABEL[code]] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": support,
        }
    accuracy = (confusion[0][0] + confusion[1][1]) / y.shape[0]
    auc_h = auc(s, y)
    return EvalReport(
        accuracy=accuracy,
        per_class=per_class,
        confusion=confusion,
        auc_hallucination=auc_h,
        auc_fact=auc_h,  # symmetric for binary scores: auc(1-s, 1-y) == auc(s, y)
        roc=roc_points(s, y),
        threshold=threshold,
        n=int(y.shape[0]),
        meta=meta or {},
    )
