"""Adamax: Adam with an infinity-norm second-moment accumulator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError


@dataclass
class AdamaxState:
    """Per-tensor optimizer state; shapes always match the owning parameter."""

    m: np.ndarray
    u: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, param: np.ndarray) -> "AdamaxState":
        return cls(m=np.zeros_like(param), u=np.zeros_like(param))


def adamax_step(
    param: np.ndarray,
    grad: np.ndarray,
    state: AdamaxState,
    alpha: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    guard_eps: float = 1e-8,
) -> None:
    """One in-place update:

        t <- t + 1
        m <- beta1 m + (1 - beta1) g
        u <- max(beta2 u, |g|)
        theta <- theta - (alpha / (1 - beta1^t)) * m / (u + guard_eps)
    """
    if param.shape != grad.shape or state.m.shape != param.shape:
        raise ShapeError(
            f"param {param.shape}, grad {grad.shape}, state {state.m.shape} disagree"
        )
    state.t += 1
    state.m[:] = beta1 * state.m + (1.0 - beta1) * grad
    np.maximum(beta2 * state.u, np.abs(grad), out=state.u)
    step = alpha / (1.0 - beta1**state.t)
    param -= step * state.m / (state.u + guard_eps)


@dataclass
class Adamax:
    """Keeps one AdamaxState per named parameter tensor."""

    alpha: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    guard_eps: float = 1e-8
    states: dict[str, AdamaxState] = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for name, param in params.items():
            if name not in self.states:
                self.states[name] = AdamaxState.fresh(param)
            adamax_step(
                param,
                grads[name],
                self.states[name],
                alpha=self.alpha,
                beta1=self.beta1,
                beta2=self.beta2,
                guard_eps=self.guard_eps,
            )
