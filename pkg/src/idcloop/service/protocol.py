"""Misclassification-correction experiment: sampling and group retraining.

The experiment measures whether feeding corrected mistakes back into
training actually repairs them. Each group independently samples false
positives and false negatives from a frozen baseline's held-out split,
adds them (with their true labels) to the training set, retrains from the
baseline weights, and re-scores exactly those samples.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from idcloop.classifier.checkpoint import Checkpoint, model_from_checkpoint
from idcloop.classifier.model import Model, predict_batch
from idcloop.classifier.training import DataSplit, TrainingConfig, train
from idcloop.errors import DatasetError, ValidationError
from idcloop.util import derive_rng, derive_seed


@dataclass(frozen=True)
class ExperimentGroupResult:
    """Outcome of one correction group."""

    group_id: int
    sample_count: int
    correct_before: int
    accuracy_before: float
    correct_after: int
    accuracy_after: float

    def __post_init__(self) -> None:
        if self.sample_count < 1:
            raise ValidationError("sample_count must be positive")
        for name in ("correct_before", "correct_after"):
            value = getattr(self, name)
            if not 0 <= value <= self.sample_count:
                raise ValidationError(
                    f"{name}={value} outside 0..{self.sample_count}"
                )

    def to_dict(self) -> dict:
        return {
            "group_id": self.group_id,
            "sample_count": self.sample_count,
            "correct_before": self.correct_before,
            "accuracy_before": self.accuracy_before,
            "correct_after": self.correct_after,
            "accuracy_after": self.accuracy_after,
        }


def _predictions(model: Model, x: np.ndarray) -> np.ndarray:
    _, labels = predict_batch(model, x)
    return labels


def select_misclassified(
    model: Model,
    x: np.ndarray,
    y: np.ndarray,
    n_fp: int = 20,
    n_fn: int = 20,
    seed: int = 0,
) -> np.ndarray:
    """Sample indices of misclassified items: n_fp false positives plus
    n_fn false negatives, drawn uniformly without replacement.

    By construction the model scores 0 on the returned set. Raises when
    either pool is too small, naming the counts found.
    """
    if n_fp < 0 or n_fn < 0 or n_fp + n_fn < 1:
        raise ValidationError("need a positive number of samples to select")
    preds = _predictions(model, x)
    truth = np.asarray(y)
    fp_pool = np.flatnonzero((preds == 1) & (truth == 0))
    fn_pool = np.flatnonzero((preds == 0) & (truth == 1))
    if len(fp_pool) < n_fp or len(fn_pool) < n_fn:
        raise DatasetError(
            f"not enough misclassifications: found {len(fp_pool)} false "
            f"positives (need {n_fp}) and {len(fn_pool)} false negatives "
            f"(need {n_fn})"
        )
    rng = derive_rng("protocol", seed)
    fp_pick = rng.choice(fp_pool, size=n_fp, replace=False)
    fn_pick = rng.choice(fn_pool, size=n_fn, replace=False)
    return np.concatenate([np.sort(fp_pick), np.sort(fn_pick)])


def run_group(
    baseline: Checkpoint,
    split: DataSplit,
    group_id: int,
    n_fp: int,
    n_fn: int,
    seed: int,
    retrain: TrainingConfig,
) -> ExperimentGroupResult:
    """Run one correction group from the frozen baseline."""
    base_model = model_from_checkpoint(baseline)
    indices = select_misclassified(
        base_model, split.x_test, split.y_test, n_fp=n_fp, n_fn=n_fn,
        seed=derive_seed("group", seed, group_id),
    )
    x_sel = split.x_test[indices]
    y_sel = split.y_test[indices]
    before = int(np.sum(_predictions(base_model, x_sel) == y_sel))
    merged = DataSplit(
        x_train=np.concatenate([split.x_train, x_sel]),
        y_train=np.concatenate([split.y_train, y_sel]),
        x_test=split.x_test,
        y_test=split.y_test,
    )
    group_seed = derive_seed("retrain-group", seed, group_id)
    cfg = replace(retrain, seed=group_seed)
    model = model_from_checkpoint(baseline, seed=group_seed)
    checkpoint, _ = train(model, merged, cfg)
    retrained = model_from_checkpoint(checkpoint)
    after = int(np.sum(_predictions(retrained, x_sel) == y_sel))
    total = len(indices)
    return ExperimentGroupResult(
        group_id=group_id,
        sample_count=total,
        correct_before=before,
        accuracy_before=before / total,
        correct_after=after,
        accuracy_after=after / total,
    )


def run_validation_protocol(
    baseline: Checkpoint,
    split: DataSplit,
    groups: int = 4,
    n_fp: int = 20,
    n_fn: int = 20,
    seed: int = 0,
    retrain: TrainingConfig = TrainingConfig(),
) -> list[ExperimentGroupResult]:
    """Run ``groups`` independent correction groups from one baseline.

    Every group starts from the same checkpoint and the same untouched
    split; only the sampling and retraining seeds differ.
    """
    if groups < 1:
        raise ValidationError("need at least one group")
    return [
        run_group(baseline, split, group_id, n_fp, n_fn, seed, retrain)
        for group_id in range(1, groups + 1)
    ]
