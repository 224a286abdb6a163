import numpy as np
import pytest

from idcloop.errors import ShapeError
from idcloop.nn import Adamax, AdamaxState, adamax_step


def scalar_adamax_oracle(theta, grads, alpha=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """Independent plain-float recurrence for one scalar parameter."""
    m, u, t = 0.0, 0.0, 0
    for g in grads:
        t += 1
        m = beta1 * m + (1 - beta1) * g
        u = max(beta2 * u, abs(g))
        theta = theta - (alpha / (1 - beta1**t)) * m / (u + eps)
    return theta


def test_zero_gradient_never_moves_params():
    param = np.array([1.0, -2.0, 3.0])
    state = AdamaxState.fresh(param)
    for _ in range(50):
        adamax_step(param, np.zeros(3), state)
    np.testing.assert_array_equal(param, [1.0, -2.0, 3.0])


def test_first_step_moves_by_alpha_sign():
    alpha = 1e-4
    param = np.array([0.0, 0.0, 0.0])
    g = np.array([0.5, -0.2, 1.3])
    adamax_step(param, g, AdamaxState.fresh(param), alpha=alpha)
    np.testing.assert_allclose(param, -alpha * np.sign(g), rtol=1e-4)


def test_two_scalar_steps_match_recurrence_oracle():
    param = np.array([0.3])
    state = AdamaxState.fresh(param)
    adamax_step(param, np.array([0.5]), state)
    adamax_step(param, np.array([-0.2]), state)
    assert param[0] == pytest.approx(scalar_adamax_oracle(0.3, [0.5, -0.2]), rel=1e-12)


def test_long_run_matches_oracle_elementwise():
    rng = np.random.default_rng(21)
    grads = rng.standard_normal((20, 3))
    param = np.array([0.1, -0.4, 2.0])
    expected = [scalar_adamax_oracle(param[i], grads[:, i]) for i in range(3)]
    state = AdamaxState.fresh(param)
    for g in grads:
        adamax_step(param, g, state)
    np.testing.assert_allclose(param, expected, rtol=1e-12)


def test_shape_mismatch_rejected():
    param = np.zeros(3)
    with pytest.raises(ShapeError):
        adamax_step(param, np.zeros(4), AdamaxState.fresh(param))


def test_optimizer_tracks_state_per_tensor():
    opt = Adamax(alpha=0.01)
    params = {"a": np.zeros(2), "b": np.ones(3)}
    grads = {"a": np.array([1.0, -1.0]), "b": np.zeros(3)}
    opt.step(params, grads)
    opt.step(params, grads)
    assert opt.states["a"].t == 2
    np.testing.assert_array_equal(params["b"], np.ones(3))
    assert params["a"][0] < 0 < params["a"][1]
