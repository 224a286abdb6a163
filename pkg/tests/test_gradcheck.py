"""Finite-difference checks for every layer's backward pass.

Inputs are conditioned away from kinks (ReLU zero crossings, pooling ties) so
central differences measure the correct one-sided behavior.
"""

import numpy as np
import pytest

from idcloop.nn import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    GlobalMaxPool,
    MaxPool2D,
    ReLU,
    gradient_check,
    softmax_cross_entropy_check,
)


def away_from_zero(x, margin=1e-2):
    """Push values with |x| < margin away from the ReLU kink."""
    small = np.abs(x) < margin
    return x + np.where(small, np.where(x >= 0, margin, -margin), 0.0)


def tie_free(x, scale=1e-3):
    """Add a deterministic ramp so pooling argmaxes are unique with margin."""
    ramp = scale * np.arange(x.size).reshape(x.shape)
    return x + ramp


def test_dense_gradcheck():
    rng = np.random.default_rng(0)
    layer = Dense(rng.standard_normal((5, 4)), rng.standard_normal(5))
    report = gradient_check(layer, rng.standard_normal((3, 4)), tolerance=1e-5)
    assert report.passed, report.per_tensor


def test_conv_gradcheck():
    rng = np.random.default_rng(1)
    layer = Conv2D(rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3), stride=1)
    report = gradient_check(layer, rng.standard_normal((1, 2, 6, 6)), tolerance=1e-5)
    assert report.passed, report.per_tensor


def test_conv_stride2_gradcheck():
    rng = np.random.default_rng(2)
    layer = Conv2D(rng.standard_normal((2, 3, 2, 2)), rng.standard_normal(2), stride=2)
    report = gradient_check(layer, rng.standard_normal((2, 3, 6, 6)), tolerance=1e-5)
    assert report.passed, report.per_tensor


def test_relu_gradcheck():
    rng = np.random.default_rng(3)
    x = away_from_zero(rng.standard_normal((4, 6)))
    report = gradient_check(ReLU(), x, tolerance=1e-5)
    assert report.passed, report.per_tensor


def test_maxpool_gradcheck():
    rng = np.random.default_rng(4)
    x = tie_free(rng.standard_normal((2, 2, 4, 4)))
    report = gradient_check(MaxPool2D(), x, tolerance=1e-5)
    assert report.passed, report.per_tensor


def test_global_maxpool_gradcheck():
    rng = np.random.default_rng(5)
    x = tie_free(rng.standard_normal((2, 3, 5, 5)))
    report = gradient_check(GlobalMaxPool(), x, tolerance=1e-5)
    assert report.passed, report.per_tensor


def test_batchnorm_train_gradcheck():
    rng = np.random.default_rng(6)
    layer = BatchNorm(
        gamma=rng.uniform(0.5, 1.5, 4),
        beta=rng.standard_normal(4),
        running_mean=np.zeros(4),
        running_var=np.ones(4),
    )
    report = gradient_check(layer, rng.standard_normal((8, 4)), tolerance=1e-4)
    assert report.passed, report.per_tensor


def test_dropout_fixed_mask_gradcheck():
    rng = np.random.default_rng(7)
    layer = Dropout(0.45)
    layer.frozen_mask = rng.random((5, 5)) >= 0.45
    report = gradient_check(layer, rng.standard_normal((5, 5)), tolerance=1e-6)
    assert report.passed, report.per_tensor


def test_softmax_cross_entropy_composite():
    rng = np.random.default_rng(8)
    logits = rng.standard_normal((6, 2))
    targets = np.zeros((6, 2))
    targets[np.arange(6), rng.integers(0, 2, 6)] = 1.0
    report = softmax_cross_entropy_check(logits, targets, tolerance=1e-6)
    assert report.passed, report.per_tensor


def test_failure_is_reported_not_thrown():
    class BrokenDense(Dense):
        def backward(self, upstream):
            grad = super().backward(upstream)
            self.grads["bias"] = self.grads["bias"] * 2.0  # deliberate bug
            return grad

    rng = np.random.default_rng(9)
    layer = BrokenDense(rng.standard_normal((3, 3)), rng.standard_normal(3))
    report = gradient_check(layer, rng.standard_normal((2, 3)), tolerance=1e-5)
    assert not report.passed
    assert report.per_tensor["bias"] > 0.1
