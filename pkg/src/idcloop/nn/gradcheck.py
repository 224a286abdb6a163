"""Finite-difference verification of layer backward passes.

The check projects the layer output onto a fixed random direction to get a
scalar loss, then compares the analytic gradient of that loss against central
differences. Everything runs at float64 so finite-difference noise stays far
below the tolerances; runtime tensors are float32 but the layer code is
dtype-agnostic.

Failures are reported, not raised: callers inspect ``report.passed``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Layer, categorical_cross_entropy, softmax


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    per_tensor: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max-norm relative error, scale-normalized per tensor."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0.0:
        return float(np.abs(analytic - numeric).max(initial=0.0))
    return float(np.abs(analytic - numeric).max() / scale)


def _numeric_grad(eval_loss, tensor: np.ndarray, h: float) -> np.ndarray:
    grad = np.zeros_like(tensor)
    it = np.nditer(tensor, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = tensor[idx]
        tensor[idx] = orig + h
        above = eval_loss()
        tensor[idx] = orig - h
        below = eval_loss()
        tensor[idx] = orig
        grad[idx] = (above - below) / (2.0 * h)
        it.iternext()
    return grad


def gradient_check(
    layer: Layer,
    x: np.ndarray,
    tolerance: float,
    h: float = 1e-5,
    train: bool = True,
    seed: int = 0,
) -> GradCheckReport:
    """Check input and parameter gradients of one layer at float64."""
    x = x.astype(np.float64)
    for name in layer.params:
        layer.params[name] = layer.params[name].astype(np.float64)

    # batch-norm forward refreshes running stats; snapshot so every
    # evaluation sees identical layer state
    stat_names = [n for n in ("running_mean", "running_var") if hasattr(layer, n)]
    saved = {n: getattr(layer, n).astype(np.float64).copy() for n in stat_names}
    for n in stat_names:
        setattr(layer, n, saved[n].copy())

    def run_forward() -> np.ndarray:
        for n in stat_names:
            getattr(layer, n)[:] = saved[n]
        return layer.forward(x, train=train)

    out = run_forward()
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(out.shape)

    def eval_loss() -> float:
        return float((run_forward() * direction).sum())

    dinput = layer.backward(direction)
    analytic = {"input": dinput, **{k: v.copy() for k, v in layer.grads.items()}}

    report = GradCheckReport(max_rel_error=0.0, tolerance=tolerance)
    tensors = {"input": x, **layer.params}
    for name, tensor in tensors.items():
        numeric = _numeric_grad(eval_loss, tensor, h)
        err = _rel_error(analytic[name], numeric)
        report.per_tensor[name] = err
        report.max_rel_error = max(report.max_rel_error, err)
    return report


def softmax_cross_entropy_check(
    logits: np.ndarray,
    targets: np.ndarray,
    tolerance: float,
    h: float = 1e-5,
) -> GradCheckReport:
    """Verify the fused (p - y)/N logit gradient of softmax + cross-entropy."""
    logits = logits.astype(np.float64)
    targets = targets.astype(np.float64)

    def eval_loss() -> float:
        return categorical_cross_entropy(softmax(logits), targets)

    analytic = (softmax(logits) - targets) / logits.shape[0]
    numeric = _numeric_grad(eval_loss, logits, h)
    err = _rel_error(analytic, numeric)
    return GradCheckReport(
        max_rel_error=err, tolerance=tolerance, per_tensor={"logits": err}
    )
