"""Model assembly and inference.

The default backbone is a small convolutional stack (conv-relu-maxpool
blocks); the head is global max pool -> batch norm -> regularized dense
256 + relu -> dropout -> dense 2.  A feature_file backbone drops the
convolutional stack and trains the head alone on precomputed feature
vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from idcloop.data.ingest import Patch
from idcloop.errors import CheckpointError, ConfigError, ShapeError
from idcloop.nn import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    GlobalMaxPool,
    Layer,
    MaxPool2D,
    ReLU,
    softmax,
)
from idcloop.util import config_digest, derive_rng

NUM_CLASSES = 2

BACKBONES = ("small_conv", "feature_file")


@dataclass(frozen=True)
class ModelConfig:
    backbone: str = "small_conv"
    conv_channels: tuple[int, ...] = (16, 32, 64)
    kernel_size: int = 3
    dense_units: int = 256
    l1: float = 0.006
    l2: float = 0.006
    dropout_rate: float = 0.45
    bn_momentum: float = 0.99
    bn_epsilon: float = 0.001
    input_size: int = 50
    input_channels: int = 3
    feature_dim: int = 64  # input width in feature_file mode

    def __post_init__(self) -> None:
        if self.backbone not in BACKBONES:
            raise ConfigError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if not self.conv_channels or any(c < 1 for c in self.conv_channels):
            raise ConfigError(f"conv_channels must be positive, got {self.conv_channels}")
        if self.kernel_size < 1:
            raise ConfigError(f"kernel_size must be >= 1, got {self.kernel_size}")
        if self.dense_units < 1:
            raise ConfigError(f"dense_units must be >= 1, got {self.dense_units}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not 0.0 <= self.bn_momentum < 1.0:
            raise ConfigError(f"bn_momentum must be in [0, 1), got {self.bn_momentum}")
        if self.bn_epsilon <= 0.0:
            raise ConfigError(f"bn_epsilon must be > 0, got {self.bn_epsilon}")
        if self.l1 < 0.0 or self.l2 < 0.0:
            raise ConfigError("regularization strengths must be >= 0")
        if self.input_size < self.kernel_size:
            raise ConfigError("input smaller than one kernel")
        if self.feature_dim < 1:
            raise ConfigError(f"feature_dim must be >= 1, got {self.feature_dim}")
        object.__setattr__(self, "conv_channels", tuple(self.conv_channels))

    @property
    def feature_width(self) -> int:
        """Width of the vector entering the head."""
        if self.backbone == "feature_file":
            return self.feature_dim
        return self.conv_channels[-1]

    def to_dict(self) -> dict:
        return {
            "backbone": self.backbone,
            "conv_channels": list(self.conv_channels),
            "kernel_size": self.kernel_size,
            "dense_units": self.dense_units,
            "l1": self.l1,
            "l2": self.l2,
            "dropout_rate": self.dropout_rate,
            "bn_momentum": self.bn_momentum,
            "bn_epsilon": self.bn_epsilon,
            "input_size": self.input_size,
            "input_channels": self.input_channels,
            "feature_dim": self.feature_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        d = dict(d)
        if "conv_channels" in d:
            d["conv_channels"] = tuple(d["conv_channels"])
        return cls(**d)

    def digest(self) -> bytes:
        return config_digest(self.to_dict())


def _uniform_fan_in(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Model:
    """Owns the layer stack; exposes named parameter and gradient dicts."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.seed = seed
        rng = derive_rng("init", str(seed))

        self.blocks: list[list[Layer]] = []
        self._named: list[tuple[str, Layer]] = []
        if cfg.backbone == "small_conv":
            size = cfg.input_size
            in_ch = cfg.input_channels
            k = cfg.kernel_size
            for bi, out_ch in enumerate(cfg.conv_channels):
                if size < k:
                    raise ConfigError(
                        f"block {bi}: spatial size {size} smaller than kernel {k}"
                    )
                kernels = _uniform_fan_in(rng, (out_ch, in_ch, k, k), in_ch * k * k)
                conv = Conv2D(kernels, np.zeros(out_ch, dtype=np.float32))
                size = size - k + 1
                block: list[Layer] = [conv, ReLU()]
                # pooling halves even extents only; odd maps skip the pool
                if size % 2 == 0 and size >= 2:
                    block.append(MaxPool2D())
                    size //= 2
                self.blocks.append(block)
                self._named.append((f"block{bi}.conv", conv))
                in_ch = out_ch
            self.global_pool: Optional[GlobalMaxPool] = GlobalMaxPool()
        else:
            self.global_pool = None

        width = cfg.feature_width
        self.bn = BatchNorm(
            gamma=np.ones(width, dtype=np.float32),
            beta=np.zeros(width, dtype=np.float32),
            running_mean=np.zeros(width, dtype=np.float32),
            running_var=np.ones(width, dtype=np.float32),
            momentum=cfg.bn_momentum,
            epsilon=cfg.bn_epsilon,
        )
        self.dense_hidden = Dense(
            _uniform_fan_in(rng, (cfg.dense_units, width), width),
            np.zeros(cfg.dense_units, dtype=np.float32),
        )
        self.relu_hidden = ReLU()
        self.dropout = Dropout(cfg.dropout_rate, rng=derive_rng("dropout", str(seed)))
        self.dense_out = Dense(
            _uniform_fan_in(rng, (NUM_CLASSES, cfg.dense_units), cfg.dense_units),
            np.zeros(NUM_CLASSES, dtype=np.float32),
        )
        self._named.extend(
            [
                ("head.bn", self.bn),
                ("head.dense1", self.dense_hidden),
                ("head.dense2", self.dense_out),
            ]
        )
        self._stack: list[Layer] = [
            layer for block in self.blocks for layer in block
        ]
        if self.global_pool is not None:
            self._stack.append(self.global_pool)
        self._stack.extend(
            [self.bn, self.dense_hidden, self.relu_hidden, self.dropout, self.dense_out]
        )

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if self.cfg.backbone == "small_conv":
            expected = (self.cfg.input_channels, self.cfg.input_size, self.cfg.input_size)
            if x.ndim != 4 or x.shape[1:] != expected:
                raise ShapeError(f"expected input (N, {expected}), got {x.shape}")
        else:
            if x.ndim != 2 or x.shape[1] != self.cfg.feature_dim:
                raise ShapeError(
                    f"expected features (N, {self.cfg.feature_dim}), got {x.shape}"
                )
        out = x
        for layer in self._stack:
            out = layer.forward(out, train=train)
        return out

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        out = upstream
        for layer in reversed(self._stack):
            out = layer.backward(out)
        return out

    def params(self) -> dict[str, np.ndarray]:
        return {
            f"{prefix}.{name}": arr
            for prefix, layer in self._named
            for name, arr in layer.params.items()
        }

    def grads(self) -> dict[str, np.ndarray]:
        return {
            f"{prefix}.{name}": arr
            for prefix, layer in self._named
            for name, arr in layer.grads.items()
        }

    def tensors(self) -> dict[str, np.ndarray]:
        """Trainable parameters plus batch-norm running statistics."""
        out = self.params()
        out["head.bn.running_mean"] = self.bn.running_mean
        out["head.bn.running_var"] = self.bn.running_var
        return out

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        own = self.tensors()
        missing = set(own) - set(tensors)
        extra = set(tensors) - set(own)
        if missing or extra:
            raise CheckpointError(
                f"tensor set mismatch: missing {sorted(missing)}, extra {sorted(extra)}"
            )
        for name, target in own.items():
            src = tensors[name]
            if src.shape != target.shape:
                raise CheckpointError(
                    f"tensor {name}: shape {src.shape} vs expected {target.shape}"
                )
            target[:] = src.astype(np.float32)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.tensors().items()}


def build_model(cfg: ModelConfig, seed: int = 0) -> Model:
    """Initialize a model: uniform fan-in weights, zero biases, unit BN."""
    return Model(cfg, seed=seed)


def _as_batch(model: Model, patch: Union[Patch, np.ndarray]) -> np.ndarray:
    pixels = patch.pixels if isinstance(patch, Patch) else np.asarray(patch)
    if model.cfg.backbone == "feature_file":
        if pixels.ndim == 1:
            return pixels[None, :].astype(np.float32)
        raise ShapeError(f"expected a feature vector, got shape {pixels.shape}")
    if pixels.ndim == 3:
        return pixels[None].astype(np.float32)
    raise ShapeError(f"expected one patch (C, H, W), got shape {pixels.shape}")


def predict(model: Model, patch: Union[Patch, np.ndarray]) -> tuple[np.ndarray, int]:
    """Infer-mode forward for one input; ties go to class 0."""
    probs = softmax(model.forward(_as_batch(model, patch), train=False))[0]
    label = int(probs[1] > probs[0])
    return probs, label


def predict_batch(model: Model, x: np.ndarray, chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Infer-mode forward over a batch, chunked to bound memory."""
    probs = np.concatenate(
        [
            softmax(model.forward(x[i : i + chunk], train=False))
            for i in range(0, len(x), chunk)
        ]
    )
    labels = (probs[:, 1] > probs[:, 0]).astype(np.int64)
    return probs, labels
