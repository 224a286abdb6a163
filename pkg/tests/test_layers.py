import numpy as np
import pytest

from idcloop.errors import (
    BatchTooSmallError,
    InvalidRateError,
    InvalidTargetError,
    ShapeError,
)
from idcloop.nn import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    GlobalMaxPool,
    MaxPool2D,
    ReLU,
    categorical_cross_entropy,
    l1_l2_penalty,
    softmax,
)


def make_batchnorm(c, momentum=0.99, eps=0.001, dtype=np.float64):
    return BatchNorm(
        gamma=np.ones(c, dtype=dtype),
        beta=np.zeros(c, dtype=dtype),
        running_mean=np.zeros(c, dtype=dtype),
        running_var=np.ones(c, dtype=dtype),
        momentum=momentum,
        epsilon=eps,
    )


class TestReLU:
    def test_negative_clamp(self):
        assert ReLU().forward(np.array([-3.0])) == 0.0

    def test_identity_on_positives(self):
        assert ReLU().forward(np.array([2.5])) == 2.5

    def test_elementwise(self):
        out = ReLU().forward(np.array([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(out, [0.0, 0.0, 2.0])

    def test_gradient_zero_at_zero(self):
        layer = ReLU()
        layer.forward(np.array([-1.0, 0.0, 2.0]))
        grad = layer.backward(np.ones(3))
        np.testing.assert_array_equal(grad, [0.0, 0.0, 1.0])


class TestDense:
    def test_identity_map(self):
        layer = Dense(np.eye(2), np.zeros(2))
        out = layer.forward(np.array([[3.0, 4.0]]))
        np.testing.assert_array_equal(out, [[3.0, 4.0]])

    def test_hand_arithmetic(self):
        # y_o = w_o . x + b_o with W=[[1,2],[3,4]], b=[1,0], x=[1,1]
        layer = Dense(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([1.0, 0.0]))
        out = layer.forward(np.array([[1.0, 1.0]]))
        np.testing.assert_array_equal(out, [[4.0, 7.0]])

    def test_backward_formulas(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((3, 5))
        w = rng.standard_normal((4, 5))
        b = rng.standard_normal(4)
        up = rng.standard_normal((3, 4))
        layer = Dense(w, b)
        layer.forward(x)
        dx = layer.backward(up)
        np.testing.assert_allclose(dx, up @ w, rtol=1e-12)
        np.testing.assert_allclose(layer.grads["weights"], up.T @ x, rtol=1e-12)
        np.testing.assert_allclose(layer.grads["bias"], up.sum(0), rtol=1e-12)

    def test_shape_mismatch_names_both_shapes(self):
        layer = Dense(np.eye(2), np.zeros(2))
        with pytest.raises(ShapeError, match=r"\(3, 3\).*\(2, 2\)"):
            layer.forward(np.zeros((3, 3)))


def conv_loop_oracle(x, kernels, bias, stride):
    """Quadruple-loop direct cross-correlation."""
    n, c, h, w = x.shape
    k, _, kh, kw = kernels.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    out = np.zeros((n, k, ho, wo))
    for ni in range(n):
        for ki in range(k):
            for i in range(ho):
                for j in range(wo):
                    patch = x[ni, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
                    out[ni, ki, i, j] = (patch * kernels[ki]).sum() + bias[ki]
    return out


class TestConv2D:
    def test_constant_field_sum(self):
        layer = Conv2D(np.ones((1, 1, 2, 2)), np.zeros(1), stride=1)
        out = layer.forward(np.ones((1, 1, 3, 3)))
        np.testing.assert_array_equal(out, np.full((1, 1, 2, 2), 4.0))

    def test_identity_kernel(self):
        x = np.random.default_rng(0).standard_normal((1, 1, 4, 4))
        layer = Conv2D(np.ones((1, 1, 1, 1)), np.zeros(1), stride=1)
        np.testing.assert_array_equal(layer.forward(x), x)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_matches_loop_oracle(self, stride):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 2, 6, 6))
        kernels = rng.standard_normal((3, 2, 3, 3))
        bias = rng.standard_normal(3)
        layer = Conv2D(kernels, bias, stride=stride)
        np.testing.assert_allclose(
            layer.forward(x), conv_loop_oracle(x, kernels, bias, stride), atol=1e-6
        )

    def test_kernel_larger_than_input(self):
        layer = Conv2D(np.ones((1, 1, 5, 5)), np.zeros(1))
        with pytest.raises(ShapeError):
            layer.forward(np.zeros((1, 1, 4, 4)))


class TestMaxPool2D:
    def test_single_window(self):
        out = MaxPool2D().forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        np.testing.assert_array_equal(out, [[[[4.0]]]])

    def test_constant_input(self):
        out = MaxPool2D().forward(np.full((1, 1, 4, 4), 7.0))
        np.testing.assert_array_equal(out, np.full((1, 1, 2, 2), 7.0))

    def test_matches_scan_oracle(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((2, 3, 4, 4))
        out = MaxPool2D().forward(x)
        for n in range(2):
            for c in range(3):
                for i in range(2):
                    for j in range(2):
                        window = x[n, c, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2]
                        assert out[n, c, i, j] == window.max()

    def test_odd_dims_rejected(self):
        with pytest.raises(ShapeError):
            MaxPool2D().forward(np.zeros((1, 1, 3, 4)))

    def test_tie_routes_to_first_cell(self):
        layer = MaxPool2D()
        layer.forward(np.full((1, 1, 2, 2), 1.0))
        grad = layer.backward(np.ones((1, 1, 1, 1)))
        np.testing.assert_array_equal(grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])


class TestGlobalMaxPool:
    def test_direct_max(self):
        out = GlobalMaxPool().forward(np.array([[[[1.0, 9.0], [3.0, 4.0]]]]))
        np.testing.assert_array_equal(out, [[9.0]])

    def test_all_equal(self):
        out = GlobalMaxPool().forward(np.full((1, 2, 3, 3), 2.5))
        np.testing.assert_array_equal(out, [[2.5, 2.5]])

    def test_matches_flatten_oracle(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((2, 4, 5, 5))
        out = GlobalMaxPool().forward(x)
        np.testing.assert_array_equal(out, x.reshape(2, 4, -1).max(-1))

    def test_backward_first_argmax(self):
        layer = GlobalMaxPool()
        layer.forward(np.full((1, 1, 2, 2), 3.0))
        grad = layer.backward(np.ones((1, 1)))
        np.testing.assert_array_equal(grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])


class TestBatchNorm:
    def test_identity_on_standardized_batch(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((64, 3))
        x = (x - x.mean(0)) / x.std(0)
        layer = make_batchnorm(3, eps=1e-10)
        out = layer.forward(x, train=True)
        np.testing.assert_allclose(out, x, atol=1e-6)

    def test_two_sample_channel_hand_value(self):
        # batch {1, 3}: mu=2, biased var=1, so outputs are -/+ 1/sqrt(1.001)
        layer = make_batchnorm(1, eps=0.001)
        out = layer.forward(np.array([[1.0], [3.0]]), train=True)
        expected = 1.0 / np.sqrt(1.001)
        np.testing.assert_allclose(out[:, 0], [-expected, expected], atol=1e-9)
        np.testing.assert_allclose(out[:, 0], [-0.9995003746877732, 0.9995003746877732])

    def test_output_moments_against_two_pass_oracle(self):
        # exact identity: output biased variance is s^2 / (s^2 + eps)
        rng = np.random.default_rng(9)
        x = rng.normal(3.0, 2.5, size=(32, 4))
        eps = 0.001
        layer = make_batchnorm(4, eps=eps)
        out = layer.forward(x, train=True)
        # independent two-pass mean/variance
        mean = np.array([sum(col) / len(col) for col in out.T])
        var = np.array(
            [sum((v - m) ** 2 for v in col) / len(col) for col, m in zip(out.T, mean)]
        )
        in_var = np.array(
            [sum((v - sum(col) / len(col)) ** 2 for v in col) / len(col) for col in x.T]
        )
        assert np.abs(mean).max() < 1e-5
        np.testing.assert_allclose(var, in_var / (in_var + eps), atol=1e-10)

    def test_unit_variance_batch_moments(self):
        # on a unit-variance batch the output variance is 1/(1+eps)
        rng = np.random.default_rng(10)
        eps = 0.001
        for n in (8, 16, 64):
            x = rng.standard_normal((n, 3))
            x = (x - x.mean(0)) / np.sqrt(x.var(0))
            out = make_batchnorm(3, eps=eps).forward(x, train=True)
            assert np.abs(out.mean(0)).max() < 1e-5
            np.testing.assert_allclose(out.var(0), 1.0 / (1.0 + eps), atol=1e-4)

    def test_running_stats_update(self):
        layer = make_batchnorm(1, momentum=0.99)
        x = np.array([[1.0], [3.0]])
        layer.forward(x, train=True)
        np.testing.assert_allclose(layer.running_mean, 0.99 * 0.0 + 0.01 * 2.0)
        np.testing.assert_allclose(layer.running_var, 0.99 * 1.0 + 0.01 * 1.0)

    def test_infer_uses_running_stats_only(self):
        layer = make_batchnorm(1, eps=0.001)
        layer.running_mean[:] = 2.0
        layer.running_var[:] = 4.0
        x = np.array([[4.0]])
        out = layer.forward(x, train=False)
        np.testing.assert_allclose(out, (4.0 - 2.0) / np.sqrt(4.001))
        np.testing.assert_array_equal(layer.running_mean, [2.0])

    def test_train_requires_two_samples(self):
        with pytest.raises(BatchTooSmallError):
            make_batchnorm(2).forward(np.zeros((1, 2)), train=True)


class TestDropout:
    def test_infer_is_bit_exact_identity(self):
        x = np.random.default_rng(1).random((5, 5)).astype(np.float32)
        out = Dropout(0.45).forward(x, train=False)
        assert out is x

    def test_zero_rate_is_identity(self):
        x = np.random.default_rng(1).random((5, 5)).astype(np.float32)
        out = Dropout(0.0).forward(x, train=True)
        assert out is x

    def test_monte_carlo_expectation(self):
        # inverted dropout keeps the expectation at the input value
        n = 100_000
        layer = Dropout(0.45, rng=np.random.default_rng(123))
        out = layer.forward(np.ones(n), train=True)
        survivor = 1.0 / 0.55
        se = np.sqrt((survivor - 1.0) / n)  # var of one element is 1/(1-p) - 1
        assert abs(out.mean() - 1.0) < 3 * se

    def test_backward_applies_same_mask(self):
        layer = Dropout(0.45, rng=np.random.default_rng(5))
        x = np.ones((4, 4))
        out = layer.forward(x, train=True)
        grad = layer.backward(np.ones_like(x))
        np.testing.assert_array_equal(grad, out)

    def test_invalid_rate(self):
        with pytest.raises(InvalidRateError):
            Dropout(1.0)


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(softmax(np.array([[0.0, 0.0]])), [[0.5, 0.5]])

    def test_analytic_exponentials(self):
        out = softmax(np.array([[np.log(2.0), 0.0]]))
        np.testing.assert_allclose(out, [[2 / 3, 1 / 3]], atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(6)
        z = rng.standard_normal((8, 4))
        for c in (-500.0, -3.2, 0.0, 7.5, 1000.0):
            np.testing.assert_allclose(softmax(z + c), softmax(z), atol=1e-6)

    def test_rows_sum_to_one_in_open_interval(self):
        rng = np.random.default_rng(8)
        z = np.clip(rng.standard_normal((50, 5)) * 5.0, -12.0, 12.0)
        p = softmax(z)
        np.testing.assert_allclose(p.sum(-1), 1.0, atol=1e-6)
        assert np.all(p > 0) and np.all(p < 1)


class TestCrossEntropy:
    def test_perfect_prediction(self):
        loss = categorical_cross_entropy(
            np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]])
        )
        assert abs(loss) < 1e-11

    def test_uniform_prediction(self):
        loss = categorical_cross_entropy(
            np.array([[0.5, 0.5]]), np.array([[0.0, 1.0]])
        )
        assert loss == pytest.approx(np.log(2.0), abs=1e-9)

    def test_malformed_one_hot(self):
        probs = np.array([[0.5, 0.5]])
        with pytest.raises(InvalidTargetError):
            categorical_cross_entropy(probs, np.array([[1.0, 1.0]]))
        with pytest.raises(InvalidTargetError):
            categorical_cross_entropy(probs, np.array([[0.5, 0.5]]))


class TestL1L2Penalty:
    def test_zero_weights(self):
        penalty, subgrad = l1_l2_penalty(np.zeros(4), 0.006, 0.006)
        assert penalty == 0.0
        np.testing.assert_array_equal(subgrad, np.zeros(4))

    def test_hand_arithmetic(self):
        # 0.006 * (|1| + |-2|) + 0.006 * (1 + 4) = 0.018 + 0.030
        penalty, subgrad = l1_l2_penalty(np.array([1.0, -2.0]), 0.006, 0.006)
        assert penalty == pytest.approx(0.048, abs=1e-12)
        np.testing.assert_allclose(subgrad, [0.006 + 0.012, -0.006 - 0.024])

    def test_even_function(self):
        rng = np.random.default_rng(4)
        w = rng.standard_normal(10)
        assert l1_l2_penalty(w, 0.01, 0.02)[0] == pytest.approx(
            l1_l2_penalty(-w, 0.01, 0.02)[0]
        )

    def test_nonnegative_and_zero_only_at_origin(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            w = rng.standard_normal(6)
            penalty, _ = l1_l2_penalty(w, 0.006, 0.006)
            assert penalty > 0.0
