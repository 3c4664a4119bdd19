"""Weighted / unweighted accuracy and cross-validation aggregation."""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Sequence

import numpy as np

N_CLASSES = 4


def confusion_matrix(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    """Rows are true classes, columns predictions."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def weighted_accuracy(confusion) -> float:
    cm = np.asarray(confusion)
    total = cm.sum()
    if total == 0:
        raise ValueError("weighted accuracy of an empty confusion matrix")
    return float(np.trace(cm) / total)


def unweighted_accuracy(confusion) -> float:
    """Mean recall over classes present in the test set."""
    cm = np.asarray(confusion)
    support = cm.sum(axis=1)
    rows = support > 0
    if not rows.any():
        raise ValueError("unweighted accuracy needs at least one supported class")
    recalls = np.diag(cm)[rows] / support[rows]
    return float(recalls.mean())


@dataclass(frozen=True, eq=False)
class Metrics:
    wa: float
    ua: float
    confusion: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Metrics):
            return NotImplemented
        return (self.wa, self.ua) == (other.wa, other.ua) and np.array_equal(self.confusion, other.confusion)

    __hash__ = None

    @classmethod
    def from_confusion(cls, cm) -> "Metrics":
        cm = np.asarray(cm)
        return cls(weighted_accuracy(cm), unweighted_accuracy(cm), cm)

    @classmethod
    def from_predictions(cls, y_true, y_pred, n_classes: int = N_CLASSES) -> "Metrics":
        return cls.from_confusion(confusion_matrix(y_true, y_pred, n_classes))


@dataclass(frozen=True)
class FoldResult:
    fold_id: int
    metrics: Metrics
    epochs_trained: int = 0
    best_epoch: int = 0
    history: tuple = field(default=(), compare=False, repr=False)
    params: Any = field(default=None, compare=False, repr=False)
    stats: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.fold_id <= 10:
            raise ValueError(f"fold id must be in 1..10, got {self.fold_id}")

    @property
    def session(self) -> int:
        return (self.fold_id - 1) // 2 + 1

    @property
    def gender(self) -> str:
        return "FM"[(self.fold_id - 1) % 2]


def round_pct(value: float, places: int = 1) -> float:
    """Half-up rounding of a percentage, immune to binary representation noise."""
    d = Decimal(f"{value:.9f}").quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)
    return float(d)


@dataclass(frozen=True)
class Aggregate:
    mean_wa: float
    mean_ua: float
    best5_wa: float
    best5_ua: float
    table: tuple[tuple[int, int, str, float, float], ...]

    def rounded(self) -> dict[str, float]:
        """Means as percentages at one decimal, the way the fold tables report them."""
        return {k: round_pct(100 * getattr(self, k)) for k in ("mean_wa", "mean_ua", "best5_wa", "best5_ua")}


def aggregate(results: Sequence[FoldResult], best_k: int = 5) -> Aggregate:
    """Unweighted means of per-fold WA/UA, plus the means of the ``best_k`` folds by UA."""
    if not results:
        raise ValueError("nothing to aggregate")
    results = sorted(results, key=lambda r: r.fold_id)
    wa = np.array([r.metrics.wa for r in results])
    ua = np.array([r.metrics.ua for r in results])
    # stable tie-break on fold id keeps the selection order-independent
    ranked = sorted(range(len(results)), key=lambda i: (-ua[i], results[i].fold_id))[:best_k]
    table = tuple((r.fold_id, r.session, r.gender, r.metrics.wa, r.metrics.ua) for r in results)
    return Aggregate(float(np.mean(wa)), float(np.mean(ua)),
                     float(np.mean(wa[ranked])), float(np.mean(ua[ranked])), table)
