"""Training loop with per-epoch evaluation and best-model selection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from idcloop.classifier.checkpoint import Checkpoint
from idcloop.classifier.model import Model
from idcloop.data.augment import AugmentConfig
from idcloop.data.corpus import CorpusManifest, PlanItem, assign_items, materialize_items
from idcloop.errors import ConfigError, DatasetError, DivergedError
from idcloop.nn import (
    Adamax,
    categorical_cross_entropy,
    l1_l2_penalty,
    softmax,
    softmax_cross_entropy_grad,
)
from idcloop.util import derive_rng


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 100
    learning_rate: float = 1e-4
    batch_size: int = 32
    seed: int = 0
    selection_metric: str = "test_accuracy"

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(
                f"batch_size must be >= 2 (batch norm needs N >= 2), got {self.batch_size}"
            )
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.selection_metric != "test_accuracy":
            raise ConfigError(
                f"only test_accuracy selection is supported, got {self.selection_metric!r}"
            )

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "selection_metric": self.selection_metric,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainingHistory:
    train_acc: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)

    best_epoch: int = 0  # index into the lists

    def __len__(self) -> int:
        return len(self.train_acc)

    def validate(self) -> None:
        n = len(self.train_acc)
        if not (len(self.train_loss) == len(self.test_acc) == len(self.test_loss) == n):
            raise ConfigError("history series lengths disagree")
        if n and not 0 <= self.best_epoch < n:
            raise ConfigError(f"best_epoch {self.best_epoch} outside history of {n}")

    def to_dict(self) -> dict:
        return {
            "train_acc": self.train_acc,
            "train_loss": self.train_loss,
            "test_acc": self.test_acc,
            "test_loss": self.test_loss,
            "best_epoch": self.best_epoch,
        }


@dataclass
class DataSplit:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray


def one_hot(labels: np.ndarray, num_classes: int = 2) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((labels.shape[0], num_classes), dtype=np.float32)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def data_split_from_items(
    items: Sequence[PlanItem],
    manifest: CorpusManifest,
    cfg: AugmentConfig,
    pad: bool = False,
) -> DataSplit:
    """Materialize manifest-assigned items into training arrays."""
    groups = assign_items(items, manifest)
    arrays = {}
    for split, members in groups.items():
        patches = materialize_items(members, cfg, pad=pad)
        if patches:
            x = np.stack([p.pixels for p in patches])
            y = np.array([p.label for p in patches], dtype=np.int64)
        else:
            x = np.zeros((0,), dtype=np.float32)
            y = np.zeros((0,), dtype=np.int64)
        arrays[split] = (x, y)
    return DataSplit(
        x_train=arrays["train"][0],
        y_train=arrays["train"][1],
        x_test=arrays["test"][0],
        y_test=arrays["test"][1],
    )


def _penalty(model: Model) -> tuple[float, np.ndarray]:
    return l1_l2_penalty(
        model.dense_hidden.params["weights"], model.cfg.l1, model.cfg.l2
    )


def evaluate_split(
    model: Model, x: np.ndarray, y: np.ndarray, chunk: int = 256
) -> tuple[float, float]:
    """Infer-mode (accuracy, loss) over a split; loss includes the penalty."""
    n = len(x)
    ce_sum = 0.0
    correct = 0
    for i in range(0, n, chunk):
        xb = x[i : i + chunk]
        probs = softmax(model.forward(xb, train=False))
        yb = y[i : i + chunk]
        ce_sum += categorical_cross_entropy(probs, one_hot(yb)) * len(xb)
        correct += int(((probs[:, 1] > probs[:, 0]).astype(np.int64) == yb).sum())
    penalty, _ = _penalty(model)
    return correct / n, ce_sum / n + penalty


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = perm[start : start + batch_size]
        if len(idx) < 2:  # batch norm cannot standardize a single sample
            continue
        yield idx


def train(
    model: Model, split: DataSplit, cfg: TrainingConfig
) -> tuple[Checkpoint, TrainingHistory]:
    """Run the full loop; returns the best-held-out checkpoint and history.

    Each epoch shuffles the train split with a seed derived from
    (cfg.seed, epoch), steps Adamax once per mini-batch on cross-entropy
    plus the dense-layer penalty, then evaluates both splits in infer
    mode.  A snapshot is taken whenever held-out accuracy strictly
    exceeds the best seen so far.
    """
    if len(split.x_train) < 2:
        raise DatasetError(f"train split needs >= 2 samples, got {len(split.x_train)}")
    if len(split.x_test) < 1:
        raise DatasetError("test split is empty")

    optimizer = Adamax(alpha=cfg.learning_rate)
    history = TrainingHistory()
    best_acc = -1.0
    best_state: Optional[dict[str, np.ndarray]] = None
    best_metrics: dict[str, float] = {}

    for epoch in range(cfg.epochs):
        rng = derive_rng("shuffle", str(cfg.seed), str(epoch))
        for batch_idx, idx in enumerate(_batches(len(split.x_train), cfg.batch_size, rng)):
            xb = split.x_train[idx]
            yb = one_hot(split.y_train[idx])
            probs = softmax(model.forward(xb, train=True))
            penalty, subgrad = _penalty(model)
            loss = categorical_cross_entropy(probs, yb) + penalty
            if not np.isfinite(loss):
                raise DivergedError(epoch=epoch, batch=batch_idx, history=history)
            model.backward(softmax_cross_entropy_grad(probs, yb))
            model.dense_hidden.grads["weights"] += subgrad
            optimizer.step(model.params(), model.grads())

        train_acc, train_loss = evaluate_split(model, split.x_train, split.y_train)
        test_acc, test_loss = evaluate_split(model, split.x_test, split.y_test)
        history.train_acc.append(train_acc)
        history.train_loss.append(train_loss)
        history.test_acc.append(test_acc)
        history.test_loss.append(test_loss)

        if test_acc > best_acc:
            best_acc = test_acc
            history.best_epoch = epoch
            best_state = model.snapshot()
            best_metrics = {
                "epoch": epoch,
                "train_accuracy": train_acc,
                "train_loss": train_loss,
                "test_accuracy": test_acc,
                "test_loss": test_loss,
            }

    assert best_state is not None
    checkpoint = Checkpoint(
        model_config=model.cfg,
        tensors=best_state,
        training_config=cfg.to_dict(),
        metrics=best_metrics,
        created_at=None,
    )
    return checkpoint, history
