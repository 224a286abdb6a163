"""Model assembly, training loop, prediction, and checkpointing."""

from idcloop.classifier.checkpoint import (
    CHECKPOINT_VERSION,
    Checkpoint,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
)
from idcloop.classifier.model import (
    Model,
    ModelConfig,
    build_model,
    predict,
    predict_batch,
)
from idcloop.classifier.training import (
    DataSplit,
    TrainingConfig,
    TrainingHistory,
    data_split_from_items,
    evaluate_split,
    one_hot,
    train,
)

__all__ = [
    "CHECKPOINT_VERSION",
    "Checkpoint",
    "DataSplit",
    "Model",
    "ModelConfig",
    "TrainingConfig",
    "TrainingHistory",
    "build_model",
    "data_split_from_items",
    "evaluate_split",
    "load_checkpoint",
    "model_from_checkpoint",
    "one_hot",
    "predict",
    "predict_batch",
    "save_checkpoint",
    "train",
]
