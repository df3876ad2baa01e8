"""Binary classification metrics with MCI as the positive class."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .features import LABEL_MCI, LABELS

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError(f"counts must be non-negative: {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    precision: float
    recall: float
    f1: float
    degenerate: bool = False  # set when a 0/0 metric was defined as 0.0

    def as_row(self) -> tuple[float, float, float, float]:
        return (self.acc, self.precision, self.recall, self.f1)


def confusion(predictions: dict[str, str], gold: dict[str, str]) -> ConfusionCounts:
    """Count TP/FP/TN/FN over matching id sets. MCI is positive."""
    if set(predictions) != set(gold):
        missing = set(gold) - set(predictions)
        extra = set(predictions) - set(gold)
        raise ValueError(f"id mismatch between predictions and gold: missing={sorted(missing)} extra={sorted(extra)}")
    tp = fp = tn = fn = 0
    for rid, pred in predictions.items():
        if pred not in LABELS or gold[rid] not in LABELS:
            raise ValueError(f"unknown label for {rid!r}: pred={pred!r} gold={gold[rid]!r}")
        if gold[rid] == LABEL_MCI:
            if pred == LABEL_MCI:
                tp += 1
            else:
                fn += 1
        else:
            if pred == LABEL_MCI:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def compute_metrics(counts: ConfusionCounts) -> MetricsReport:
    """Accuracy, precision, recall and F1; any 0/0 is defined as 0.0."""
    if counts.total == 0:
        raise ValueError("cannot compute metrics over zero records")
    degenerate = False

    def ratio(num: int, den: int, name: str) -> float:
        nonlocal degenerate
        if den == 0:
            degenerate = True
            logger.warning("%s undefined (0/0), reporting 0.0", name)
            return 0.0
        return num / den

    acc = (counts.tp + counts.tn) / counts.total
    precision = ratio(counts.tp, counts.tp + counts.fp, "precision")
    recall = ratio(counts.tp, counts.tp + counts.fn, "recall")
    if precision + recall == 0:
        degenerate = True
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricsReport(acc=acc, precision=precision, recall=recall, f1=f1, degenerate=degenerate)


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0.0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)
