from .layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    GlobalMaxPool,
    Layer,
    MaxPool2D,
    ReLU,
    categorical_cross_entropy,
    l1_l2_penalty,
    softmax,
    softmax_cross_entropy_grad,
)
from .optim import Adamax, AdamaxState, adamax_step
from .gradcheck import GradCheckReport, gradient_check, softmax_cross_entropy_check

__all__ = [
    "Adamax",
    "AdamaxState",
    "BatchNorm",
    "Conv2D",
    "Dense",
    "Dropout",
    "GlobalMaxPool",
    "GradCheckReport",
    "Layer",
    "MaxPool2D",
    "ReLU",
    "adamax_step",
    "categorical_cross_entropy",
    "gradient_check",
    "l1_l2_penalty",
    "softmax",
    "softmax_cross_entropy_check",
    "softmax_cross_entropy_grad",
]
