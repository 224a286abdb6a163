"""Differentiable layers and loss functions on plain numpy arrays.

Every layer exposes ``forward(x, train)`` and ``backward(upstream)``.
``forward`` caches what the backward pass needs; ``backward`` returns the
gradient with respect to the layer input and fills ``self.grads`` with one
entry per trainable parameter in ``self.params``. Arrays keep the dtype they
come in with: the runtime uses float32, the gradient checker runs the same
code at float64.

Shape conventions:
  - dense inputs are (N, in), weights (out, in), bias (out,)
  - image tensors are (N, C, H, W), conv kernels (K, C, kh, kw)
  - batch norm operates on (N, C) feature matrices
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import (
    BatchTooSmallError,
    InvalidRateError,
    InvalidTargetError,
    ShapeError,
)

LOG_FLOOR = 1e-12  # keeps cross-entropy finite on saturated probabilities


class Layer:
    """Base class: parameter/gradient dicts plus the forward/backward pair."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ReLU(Layer):
    """f(x) = max(0, x); the gradient at exactly 0 is defined as 0."""

    def forward(self, x, train=True):
        self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, upstream):
        return upstream * self._mask


class Dense(Layer):
    """Affine map y = x W^T + b with weights of shape (out, in)."""

    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        super().__init__()
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise ShapeError(
                f"dense expects weights (out, in) and bias (out,), "
                f"got {weights.shape} and {bias.shape}"
            )
        self.params = {"weights": weights, "bias": bias}

    def forward(self, x, train=True):
        w = self.params["weights"]
        if x.ndim != 2 or x.shape[1] != w.shape[1]:
            raise ShapeError(
                f"dense input {x.shape} incompatible with weights {w.shape}"
            )
        self._x = x
        return x @ w.T + self.params["bias"]

    def backward(self, upstream):
        self.grads["weights"] = upstream.T @ self._x
        self.grads["bias"] = upstream.sum(axis=0)
        return upstream @ self.params["weights"]


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int):
    """Unfold (N, C, H, W) into (N, C*kh*kw, H'*W') patch columns."""
    n, c, h, w = x.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, ho * wo)
    return np.ascontiguousarray(cols), ho, wo


def _col2im(dcols: np.ndarray, x_shape, kh: int, kw: int, stride: int, ho: int, wo: int):
    """Scatter-add patch-column gradients back onto the input grid."""
    n, c, h, w = x_shape
    dx = np.zeros(x_shape, dtype=dcols.dtype)
    d = dcols.reshape(n, c, kh, kw, ho, wo)
    for p in range(kh):
        for q in range(kw):
            dx[:, :, p : p + ho * stride : stride, q : q + wo * stride : stride] += d[
                :, :, p, q
            ]
    return dx


class Conv2D(Layer):
    """Valid-padding cross-correlation, (N,C,H,W) x (K,C,kh,kw) -> (N,K,H',W')."""

    def __init__(self, kernels: np.ndarray, bias: np.ndarray, stride: int = 1):
        super().__init__()
        if kernels.ndim != 4 or bias.shape != (kernels.shape[0],):
            raise ShapeError(
                f"conv expects kernels (K, C, kh, kw) and bias (K,), "
                f"got {kernels.shape} and {bias.shape}"
            )
        if stride < 1:
            raise ShapeError(f"stride must be positive, got {stride}")
        self.stride = stride
        self.params = {"kernels": kernels, "bias": bias}

    def forward(self, x, train=True):
        k, c, kh, kw = self.params["kernels"].shape
        if x.ndim != 4 or x.shape[1] != c:
            raise ShapeError(
                f"conv input {x.shape} incompatible with kernels {(k, c, kh, kw)}"
            )
        if kh > x.shape[2] or kw > x.shape[3]:
            raise ShapeError(
                f"kernel {(kh, kw)} larger than input {x.shape[2:]}"
            )
        cols, ho, wo = _im2col(x, kh, kw, self.stride)
        self._cols, self._x_shape = cols, x.shape
        w_mat = self.params["kernels"].reshape(k, c * kh * kw)
        out = w_mat @ cols + self.params["bias"][:, None]
        return out.reshape(x.shape[0], k, ho, wo)

    def backward(self, upstream):
        k, c, kh, kw = self.params["kernels"].shape
        n, _, ho, wo = upstream.shape
        up = upstream.reshape(n, k, ho * wo)
        self.grads["bias"] = up.sum(axis=(0, 2))
        # one big GEMM per direction instead of a per-sample loop
        up_flat = up.transpose(1, 0, 2).reshape(k, n * ho * wo)
        cols_flat = self._cols.transpose(1, 0, 2).reshape(c * kh * kw, n * ho * wo)
        self.grads["kernels"] = (up_flat @ cols_flat.T).reshape(k, c, kh, kw)
        w_mat = self.params["kernels"].reshape(k, c * kh * kw)
        dcols = (w_mat.T @ up_flat).reshape(c * kh * kw, n, ho * wo).transpose(1, 0, 2)
        return _col2im(dcols, self._x_shape, kh, kw, self.stride, ho, wo)


class MaxPool2D(Layer):
    """2x2 max pooling with stride 2; ties route the gradient to the first cell."""

    def forward(self, x, train=True):
        n, c, h, w = x.shape
        if h % 2 != 0 or w % 2 != 0:
            raise ShapeError(f"maxpool2 needs even spatial dims, got {h}x{w}")
        ho, wo = h // 2, w // 2
        windows = x.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5)
        flat = windows.reshape(n, c, ho, wo, 4)
        self._argmax = flat.argmax(axis=-1)
        self._x_shape = x.shape
        return flat.max(axis=-1)

    def backward(self, upstream):
        n, c, h, w = self._x_shape
        ho, wo = h // 2, w // 2
        dflat = np.zeros((n, c, ho, wo, 4), dtype=upstream.dtype)
        np.put_along_axis(dflat, self._argmax[..., None], upstream[..., None], axis=-1)
        return (
            dflat.reshape(n, c, ho, wo, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h, w)
        )


class GlobalMaxPool(Layer):
    """(N, C, H, W) -> (N, C) spatial maximum; gradient goes to the first argmax."""

    def forward(self, x, train=True):
        n, c, h, w = x.shape
        flat = x.reshape(n, c, h * w)
        self._argmax = flat.argmax(axis=-1)
        self._x_shape = x.shape
        return flat.max(axis=-1)

    def backward(self, upstream):
        n, c, h, w = self._x_shape
        dflat = np.zeros((n, c, h * w), dtype=upstream.dtype)
        np.put_along_axis(dflat, self._argmax[..., None], upstream[..., None], axis=-1)
        return dflat.reshape(self._x_shape)


class BatchNorm(Layer):
    """Per-channel standardization of (N, C) features.

    Train mode normalizes by the biased batch statistics and refreshes the
    running statistics as running <- momentum * running + (1 - momentum) * batch.
    Infer mode uses the running statistics only and leaves state untouched.
    """

    def __init__(
        self,
        gamma: np.ndarray,
        beta: np.ndarray,
        running_mean: np.ndarray,
        running_var: np.ndarray,
        momentum: float = 0.99,
        epsilon: float = 0.001,
    ):
        super().__init__()
        c = gamma.shape[0]
        if any(a.shape != (c,) for a in (beta, running_mean, running_var)):
            raise ShapeError("batchnorm parameter vectors must share one length")
        if epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {epsilon}")
        self.params = {"gamma": gamma, "beta": beta}
        self.running_mean = running_mean
        self.running_var = running_var
        self.momentum = momentum
        self.epsilon = epsilon

    def forward(self, x, train=True):
        c = self.params["gamma"].shape[0]
        if x.ndim != 2 or x.shape[1] != c:
            raise ShapeError(f"batchnorm input {x.shape} incompatible with {c} channels")
        if train:
            if x.shape[0] < 2:
                raise BatchTooSmallError(
                    f"train-mode batch norm needs N >= 2, got N={x.shape[0]}"
                )
            mu = x.mean(axis=0)
            var = x.var(axis=0)  # biased, matching the running-stat update
            inv_std = 1.0 / np.sqrt(var + self.epsilon)
            xhat = (x - mu) * inv_std
            self._train = True
            self._xhat, self._inv_std = xhat, inv_std
            m = self.momentum
            self.running_mean[:] = m * self.running_mean + (1 - m) * mu
            self.running_var[:] = m * self.running_var + (1 - m) * var
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.epsilon)
            xhat = (x - self.running_mean) * inv_std
            self._train = False
            self._inv_std = inv_std
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, upstream):
        gamma = self.params["gamma"]
        if not self._train:
            self.grads["gamma"] = np.zeros_like(gamma)
            self.grads["beta"] = np.zeros_like(gamma)
            return upstream * gamma * self._inv_std
        xhat = self._xhat
        n = upstream.shape[0]
        dgamma = (upstream * xhat).sum(axis=0)
        dbeta = upstream.sum(axis=0)
        self.grads["gamma"] = dgamma
        self.grads["beta"] = dbeta
        return (gamma * self._inv_std / n) * (
            n * upstream - dbeta - xhat * dgamma
        )


class Dropout(Layer):
    """Inverted dropout: zero with probability ``rate``, scale survivors.

    Inference is the identity. A seeded generator makes the masks reproducible;
    ``frozen_mask`` pins one mask so the layer becomes a fixed linear map for
    gradient checking.
    """

    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise InvalidRateError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng if rng is not None else np.random.default_rng()
        self.frozen_mask: np.ndarray | None = None

    def forward(self, x, train=True):
        if not train or self.rate == 0.0:
            self._scaled_mask = None
            return x
        if self.frozen_mask is not None:
            mask = self.frozen_mask
        else:
            mask = self.rng.random(x.shape) >= self.rate
        self._scaled_mask = mask.astype(x.dtype) / (1.0 - self.rate)
        return x * self._scaled_mask

    def backward(self, upstream):
        if self._scaled_mask is None:
            return upstream
        return upstream * self._scaled_mask


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for stability."""
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_one_hot(targets: np.ndarray) -> None:
    ones = targets == 1
    zeros = targets == 0
    if not np.all(ones | zeros) or not np.all(ones.sum(axis=-1) == 1):
        raise InvalidTargetError("targets must be one-hot rows of 0s and a single 1")


def categorical_cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean over the batch of -sum_k y_k ln(p_k + floor)."""
    if probs.shape != targets.shape:
        raise ShapeError(f"probs {probs.shape} vs targets {targets.shape}")
    row_sums = probs.sum(axis=-1)
    if np.any(np.abs(row_sums - 1.0) > 1e-4):
        raise InvalidTargetError("probability rows must sum to 1 within 1e-4")
    _check_one_hot(targets)
    picked = (probs * targets).sum(axis=-1)
    return float(-np.mean(np.log(picked + LOG_FLOOR)))


def softmax_cross_entropy_grad(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Gradient of the mean cross-entropy with respect to the logits: (p - y)/N."""
    return (probs - targets) / probs.shape[0]


def l1_l2_penalty(
    weights: np.ndarray, lambda1: float, lambda2: float
) -> tuple[float, np.ndarray]:
    """Return (l1*sum|w| + l2*sum w^2, subgradient) with sign(0) = 0."""
    penalty = lambda1 * np.abs(weights).sum() + lambda2 * (weights**2).sum()
    subgrad = lambda1 * np.sign(weights) + 2.0 * lambda2 * weights
    return float(penalty), subgrad
