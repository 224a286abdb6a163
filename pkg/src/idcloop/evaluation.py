"""Confusion matrix, derived metrics, and history export.

Metrics with a zero denominator are reported as undefined rather than
silently coerced to 0; a medical screening report must not manufacture
numbers.  Percentages round half-up to two decimals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Optional, Sequence

from idcloop.classifier.training import TrainingHistory
from idcloop.errors import InvalidTargetError, ShapeError
from idcloop.util import canonical_json

METRIC_NAMES = ("accuracy", "sensitivity", "specificity", "precision", "f1")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "fn", "tn"):
            v = getattr(self, name)
            if v < 0:
                raise InvalidTargetError(f"{name} must be >= 0, got {v}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def confusion_matrix(
    predictions: Sequence[int], truths: Sequence[int], positive_class: int = 1
) -> ConfusionMatrix:
    """Count agreement cells treating positive_class as the positive."""
    if positive_class not in (0, 1):
        raise InvalidTargetError(f"positive_class must be 0 or 1, got {positive_class}")
    if len(predictions) != len(truths):
        raise ShapeError(
            f"predictions ({len(predictions)}) and truths ({len(truths)}) differ in length"
        )
    if len(predictions) == 0:
        raise InvalidTargetError("need at least one prediction")
    tp = fp = fn = tn = 0
    for p, t in zip(predictions, truths):
        if p not in (0, 1) or t not in (0, 1):
            raise InvalidTargetError(f"labels must be 0 or 1, got pred {p}, truth {t}")
        pos_p = p == positive_class
        pos_t = t == positive_class
        if pos_p and pos_t:
            tp += 1
        elif pos_p:
            fp += 1
        elif pos_t:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, fn=fn, tn=tn)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: Optional[float]
    sensitivity: Optional[float]
    specificity: Optional[float]
    precision: Optional[float]
    f1: Optional[float]

    @property
    def undefined(self) -> list[str]:
        return [n for n in METRIC_NAMES if getattr(self, n) is None]

    def to_dict(self) -> dict:
        d = {n: getattr(self, n) for n in METRIC_NAMES}
        d["undefined"] = self.undefined
        return d

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def as_percentages(self) -> dict[str, Optional[str]]:
        return {
            n: None if getattr(self, n) is None else percent(getattr(self, n))
            for n in METRIC_NAMES
        }


def percent(fraction: float) -> str:
    """Format a [0,1] fraction as a 2-decimal percentage, rounding half-up."""
    return str(
        (Decimal(fraction) * 100).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    )


def _ratio(num: int, den: int) -> Optional[float]:
    return None if den == 0 else num / den


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """The five standard screening metrics from a confusion matrix."""
    if cm.total == 0:
        raise InvalidTargetError("confusion matrix is empty")
    accuracy = (cm.tp + cm.tn) / cm.total
    sensitivity = _ratio(cm.tp, cm.tp + cm.fn)
    specificity = _ratio(cm.tn, cm.tn + cm.fp)
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    if precision is None or sensitivity is None or (precision + sensitivity) == 0:
        f1 = None
    else:
        f1 = 2.0 * precision * sensitivity / (precision + sensitivity)
    return MetricsReport(
        accuracy=accuracy,
        sensitivity=sensitivity,
        specificity=specificity,
        precision=precision,
        f1=f1,
    )


def export_history(history: TrainingHistory, path: Path) -> None:
    """Write the per-epoch curves as CSV with 6-decimal fixed formatting."""
    history.validate()
    if len(history) == 0:
        raise InvalidTargetError("history is empty; nothing to export")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_acc", "train_loss", "test_acc", "test_loss"])
        for i in range(len(history)):
            writer.writerow(
                [
                    i + 1,
                    f"{history.train_acc[i]:.6f}",
                    f"{history.train_loss[i]:.6f}",
                    f"{history.test_acc[i]:.6f}",
                    f"{history.test_loss[i]:.6f}",
                ]
            )
