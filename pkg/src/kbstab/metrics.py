"""Binary classification metrics with a full confusion matrix."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    support: dict = field(default_factory=dict)
    confusion: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        n = self.tp + self.fp + self.fn + self.tn
        return (self.tp + self.tn) / n if n else 0.0

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def f1_score(precision: float, recall: float) -> float:
    if precision + recall <= 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def binary_metrics(gold, predicted, labels=None, gold_labels=None, predicted_labels=None) -> Metrics:
    """P/R/F1 for boolean ``gold``/``predicted`` sequences (True = positive).

    When multi-class ``gold_labels``/``predicted_labels`` are given, ``support``
    and ``confusion`` are computed over them; otherwise over the booleans.
    """
    gold = list(gold)
    predicted = list(predicted)
    if len(gold) != len(predicted):
        raise ValueError("gold and predicted lengths differ")
    tp = sum(1 for g, p in zip(gold, predicted) if g and p)
    fp = sum(1 for g, p in zip(gold, predicted) if p and not g)
    fn = sum(1 for g, p in zip(gold, predicted) if g and not p)
    tn = len(gold) - tp - fp - fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if gold_labels is None:
        gold_labels = gold
        predicted_labels = predicted
    labels = list(labels) if labels is not None else sorted(set(gold_labels) | set(predicted_labels))
    confusion = {g: {p: 0 for p in labels} for g in labels}
    for g, p in zip(gold_labels, predicted_labels):
        confusion[g][p] += 1
    support = {lab: 0 for lab in labels}
    support.update(Counter(gold_labels))
    return Metrics(precision, recall, f1_score(precision, recall), tp, fp, fn, tn, support, confusion)
