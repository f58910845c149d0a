import numpy as np
import pytest

from padforge import nn
from padforge.nn import ShapeError

from oracles import dense_loops, maxpool_loops


class TestMaxPool:
    def test_window_max(self):
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        assert nn.maxpool2d(x)[0, 0, 0, 0] == 4.0

    def test_constant_input(self):
        x = np.full((1, 2, 4, 4), 0.3)
        out = nn.maxpool2d(x)
        assert out.shape == (1, 2, 2, 2)
        assert np.all(out == 0.3)

    def test_matches_window_oracle(self):
        x = np.random.default_rng(0).standard_normal((1, 2, 8, 8))
        np.testing.assert_array_equal(nn.maxpool2d(x), maxpool_loops(x))

    def test_odd_extent_rejected(self):
        with pytest.raises(ShapeError):
            nn.maxpool2d(np.zeros((1, 1, 5, 4)))

    def test_backward_tie_goes_to_lowest_linear_index(self):
        x = np.full((1, 1, 2, 2), 2.0)  # four-way tie
        dout = np.ones((1, 1, 1, 1))
        dx = nn.maxpool2d_backward(x, dout)
        np.testing.assert_array_equal(dx[0, 0], [[1.0, 0.0], [0.0, 0.0]])

    def test_backward_routes_to_argmax(self):
        x = np.array([[[[1.0, 5.0], [2.0, 3.0]]]])
        dx = nn.maxpool2d_backward(x, np.full((1, 1, 1, 1), 7.0))
        np.testing.assert_array_equal(dx[0, 0], [[0.0, 7.0], [0.0, 0.0]])


class TestBatchNorm:
    def test_normalized_input_fixed_point(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((8, 3, 6, 6))
        x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
        out, _ = nn.batchnorm2d(x, np.ones(3), np.zeros(3), np.zeros(3), np.ones(3),
                                train=True)
        np.testing.assert_allclose(out, x, rtol=1e-5, atol=1e-7)

    def test_zero_gamma_gives_beta(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 2, 3, 3))
        beta = np.array([0.5, -1.5])
        out, _ = nn.batchnorm2d(x, np.zeros(2), beta, np.zeros(2), np.ones(2), train=True)
        np.testing.assert_allclose(out[:, 0], 0.5, atol=1e-12)
        np.testing.assert_allclose(out[:, 1], -1.5, atol=1e-12)

    def test_train_mode_moments(self):
        rng = np.random.default_rng(3)
        x = 3.0 + 2.0 * rng.standard_normal((16, 4, 5, 5))
        out, _ = nn.batchnorm2d(x, np.ones(4), np.zeros(4), np.zeros(4), np.ones(4),
                                train=True)
        np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-6)
        np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, atol=1e-4)

    def test_running_stats_update(self):
        rng = np.random.default_rng(4)
        x = 1.0 + rng.standard_normal((8, 2, 4, 4))
        rm, rv = np.zeros(2), np.ones(2)
        nn.batchnorm2d(x, np.ones(2), np.zeros(2), rm, rv, train=True)
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        np.testing.assert_allclose(rm, 0.1 * mean, atol=1e-12)
        np.testing.assert_allclose(rv, 0.9 + 0.1 * var, atol=1e-12)

    def test_eval_mode_uses_running_stats(self):
        x = np.full((2, 1, 2, 2), 5.0)
        out, _ = nn.batchnorm2d(x, np.ones(1), np.zeros(1), np.array([3.0]),
                                np.array([4.0]), train=False)
        np.testing.assert_allclose(out, (5.0 - 3.0) / np.sqrt(4.0 + 1e-5), rtol=1e-9)

    def test_fresh_stats_are_identity_standardization(self):
        # eval before any training step normalizes against mean 0, var 1
        x = np.random.default_rng(5).standard_normal((2, 3, 4, 4))
        out, _ = nn.batchnorm2d(x, np.ones(3), np.zeros(3), np.zeros(3), np.ones(3),
                                train=False)
        np.testing.assert_allclose(out, x / np.sqrt(1 + 1e-5), rtol=1e-12)

    def test_zero_batch_rejected(self):
        with pytest.raises(ShapeError):
            nn.batchnorm2d(np.zeros((0, 2, 2, 2)), np.ones(2), np.zeros(2),
                           np.zeros(2), np.ones(2), train=True)

    def test_gamma_length_mismatch(self):
        with pytest.raises(ShapeError):
            nn.batchnorm2d(np.zeros((1, 3, 2, 2)), np.ones(2), np.zeros(2),
                           np.zeros(2), np.ones(2), train=True)


class TestRelu:
    def test_elementwise(self):
        np.testing.assert_array_equal(nn.relu(np.array([-1.0, 0.0, 2.0])),
                                      [0.0, 0.0, 2.0])

    def test_all_negative(self):
        assert np.all(nn.relu(-np.random.default_rng(0).random((3, 4))) == 0.0)

    def test_subgradient_convention(self):
        x = np.array([-0.5, 0.0, 0.5])
        dout = np.array([2.0, 2.0, 2.0])
        np.testing.assert_array_equal(nn.relu_backward(x, dout), [0.0, 0.0, 2.0])


class TestDense:
    def test_identity(self):
        x = np.random.default_rng(1).random((3, 4))
        np.testing.assert_allclose(nn.dense(x, np.eye(4), np.zeros(4)), x, atol=1e-15)

    def test_zero_weights_give_bias(self):
        b = np.array([1.0, -2.0])
        out = nn.dense(np.random.default_rng(2).random((3, 5)), np.zeros((5, 2)), b)
        np.testing.assert_array_equal(out, np.tile(b, (3, 1)))

    def test_matches_dot_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((4, 8))
        w = rng.standard_normal((8, 4))
        b = rng.standard_normal(4)
        np.testing.assert_allclose(nn.dense(x, w, b), dense_loops(x, w, b), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            nn.dense(np.zeros((2, 3)), np.zeros((4, 2)), np.zeros(2))


class TestFiniteness:
    @pytest.mark.parametrize("trial", range(3))
    def test_forward_ops_finite_on_finite_input(self, trial):
        rng = np.random.default_rng(trial)
        x = rng.standard_normal((2, 4, 8, 8)) * 10 ** trial
        outs = [
            nn.standard_conv2d(x, nn.ConvKernel("standard", rng.standard_normal((4, 4, 3, 3)))),
            nn.depthwise_conv2d(x, nn.ConvKernel("depthwise", rng.standard_normal((4, 3, 3)))),
            nn.pointwise_conv2d(x, nn.ConvKernel("pointwise", rng.standard_normal((4, 4, 1, 1)))),
            nn.maxpool2d(x),
            nn.relu(x),
            nn.batchnorm2d(x, np.ones(4), np.zeros(4), np.zeros(4), np.ones(4), True)[0],
            nn.global_avg_pool(x),
        ]
        for out in outs:
            assert np.all(np.isfinite(out))
