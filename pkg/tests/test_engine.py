"""Tensor engine: forward values, gradients, graph mechanics and tensor files."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affectrec.engine import (
    ContractError,
    DimensionError,
    NonFiniteError,
    Tensor,
    batch_norm,
    conv2d,
    elementwise,
    global_avg_pool,
    grad_check,
    linear,
    max_pool2d,
    no_grad,
    ops,
    projected,
)
from affectrec.engine import io as tio


def t64(a, grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def conv_oracle(x, w, b, stride, padding):
    """Direct nested-loop cross-correlation."""
    B, C, H, W = x.shape
    F, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    out = np.zeros((B, F, Ho, Wo))
    for n in range(B):
        for f in range(F):
            for i in range(Ho):
                for j in range(Wo):
                    patch = xp[n, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
                    out[n, f, i, j] = (patch * w[f]).sum() + (0.0 if b is None else b[f])
    return out


class TestConv2d:
    def test_identity_kernel(self):
        x = t64([[[[1, 2], [3, 4]]]])
        out = conv2d(x, t64(np.ones((1, 1, 1, 1))), t64([0.0]))
        np.testing.assert_array_equal(out.data, x.data)

    def test_zero_input_gives_bias(self):
        out = conv2d(t64(np.zeros((2, 3, 5, 5))), t64(np.random.default_rng(0).normal(size=(4, 3, 3, 3))), t64([1.0, -2.0, 0.5, 3.0]))
        for f, b in enumerate([1.0, -2.0, 0.5, 3.0]):
            assert np.all(out.data[:, f] == b)

    def test_sliding_window_sum(self):
        x = t64(np.arange(1, 10).reshape(1, 1, 3, 3))
        out = conv2d(x, t64(np.ones((1, 1, 2, 2))), t64([0.0]))
        np.testing.assert_array_equal(out.data[0, 0], [[12, 16], [24, 28]])

    @pytest.mark.parametrize("stride,padding,k", [(1, 0, 3), (2, 1, 3), (1, 2, 5), (2, 0, 1), (3, 3, 7)])
    def test_matches_loop_oracle(self, stride, padding, k):
        rng = np.random.default_rng(stride * 10 + padding)
        x = rng.normal(size=(2, 3, 9, 8))
        w = rng.normal(size=(4, 3, k, k))
        b = rng.normal(size=4)
        out = conv2d(t64(x), t64(w), t64(b), stride, padding)
        np.testing.assert_allclose(out.data, conv_oracle(x, w, b, stride, padding), rtol=1e-12, atol=1e-12)

    def test_output_shape(self):
        out = conv2d(t64(np.zeros((1, 3, 150, 150))), t64(np.zeros((64, 3, 7, 7))), None, 2, 3)
        assert out.shape == (1, 64, 75, 75)

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            conv2d(t64(np.zeros((1, 2, 4, 4))), t64(np.zeros((1, 3, 3, 3))))

    def test_kernel_too_large(self):
        with pytest.raises(DimensionError):
            conv2d(t64(np.zeros((1, 1, 2, 2))), t64(np.zeros((1, 1, 3, 3))))

    def test_gradient(self):
        rng = np.random.default_rng(1)
        inputs = [t64(rng.normal(size=(2, 2, 5, 5))), t64(rng.normal(size=(3, 2, 3, 3))), t64(rng.normal(size=3))]
        err = grad_check(projected(lambda x, w, b: conv2d(x, w, b, 2, 1)), inputs)
        assert err < 1e-5


class TestPooling:
    def test_max_pool_basic(self):
        out = max_pool2d(t64([[[[1, 2], [3, 4]]]]), 2, 2)
        np.testing.assert_array_equal(out.data, [[[[4]]]])

    def test_max_pool_enumerated(self):
        out = max_pool2d(t64([[[[1, 5], [7, 2]]]]), 2, 1)
        assert out.data.item() == 7

    def test_tie_routes_to_first(self):
        x = t64(np.full((1, 1, 4, 4), 3.0))
        out = max_pool2d(x, 2, 2)
        np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2), 3.0))
        ops.sum(out).backward()
        expected = np.zeros((4, 4))
        expected[0::2, 0::2] = 1.0
        np.testing.assert_array_equal(x.grad[0, 0], expected)

    def test_window_too_large(self):
        with pytest.raises(DimensionError):
            max_pool2d(t64(np.zeros((1, 1, 2, 2))), 3, 1)

    def test_overlapping_windows_accumulate(self):
        x = t64([[[[0, 0, 0], [0, 9, 0], [0, 0, 0]]]])
        ops.sum(max_pool2d(x, 2, 1)).backward()
        assert x.grad[0, 0, 1, 1] == 4.0

    def test_avg_pool(self):
        assert global_avg_pool(t64(np.full((1, 2, 3, 3), 2.5))).data.tolist() == [[2.5, 2.5]]
        assert global_avg_pool(t64([[[[1, 3], [5, 7]]]])).data.item() == 4.0

    def test_avg_pool_gradient_uniform(self):
        x = t64(np.zeros((2, 3, 4, 5)))
        ops.sum(global_avg_pool(x)).backward()
        np.testing.assert_allclose(x.grad, 1.0 / 20)


class TestLinear:
    def test_identity(self):
        x = t64([[1.0, -2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(linear(x, t64(np.eye(2)), t64([0.0, 0.0])).data, x.data)

    def test_zero_weight(self):
        out = linear(t64(np.ones((3, 2))), t64(np.zeros((2, 2))), t64([5.0, -1.0]))
        np.testing.assert_array_equal(out.data, [[5, -1]] * 3)

    def test_hand_multiply(self):
        out = linear(t64([[1.0, 2.0]]), t64([[1.0, 0.0], [0.0, 2.0]]), t64([1.0, 1.0]))
        np.testing.assert_array_equal(out.data, [[2.0, 5.0]])

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            linear(t64(np.ones((2, 3))), t64(np.ones((2, 2))), t64(np.ones(2)))

    def test_gradient(self):
        rng = np.random.default_rng(2)
        inputs = [t64(rng.normal(size=(4, 3))), t64(rng.normal(size=(3, 2))), t64(rng.normal(size=2))]
        assert grad_check(projected(linear), inputs) < 1e-6


class TestBatchNorm:
    def _buffers(self, c):
        return np.zeros(c), np.ones(c)

    def test_standardized_input_passes_through(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(64, 2))
        x = (x - x.mean(0)) / x.std(0)
        mean, var = self._buffers(2)
        out = batch_norm(t64(x), t64(np.ones(2)), t64(np.zeros(2)), mean, var, train=True)
        np.testing.assert_allclose(out.data, x, atol=1e-4)

    def test_zero_gamma_gives_beta(self):
        mean, var = self._buffers(3)
        out = batch_norm(t64(np.random.default_rng(0).normal(size=(4, 3, 2, 2))), t64(np.zeros(3)), t64([1.0, 2.0, 3.0]), mean, var, True)
        for c in range(3):
            assert np.all(out.data[:, c] == c + 1)

    def test_two_values_normalize_to_pm_one(self):
        mean, var = self._buffers(1)
        out = batch_norm(t64([[1.0], [3.0]]), t64([1.0]), t64([0.0]), mean, var, True, eps=0.0)
        np.testing.assert_allclose(out.data[:, 0], [-1.0, 1.0])

    def test_running_stats_update(self):
        mean, var = self._buffers(1)
        batch_norm(t64([[1.0], [3.0]]), t64([1.0]), t64([0.0]), mean, var, True, momentum=0.9)
        assert mean[0] == pytest.approx(0.1 * 2.0)
        # unbiased batch variance of [1, 3] is 2
        assert var[0] == pytest.approx(0.9 + 0.1 * 2.0)

    def test_eval_uses_running_stats(self):
        mean, var = np.array([1.0]), np.array([4.0])
        out = batch_norm(t64([[3.0], [5.0]]), t64([1.0]), t64([0.0]), mean, var, False, eps=0.0)
        np.testing.assert_allclose(out.data[:, 0], [1.0, 2.0])
        assert mean[0] == 1.0 and var[0] == 4.0

    def test_single_element_per_channel_rejected(self):
        mean, var = self._buffers(2)
        with pytest.raises(ContractError):
            batch_norm(t64(np.ones((1, 2))), t64(np.ones(2)), t64(np.zeros(2)), mean, var, True)

    @pytest.mark.parametrize("train", [True, False])
    def test_gradient(self, train):
        rng = np.random.default_rng(4)
        mean, var = rng.normal(size=3), rng.uniform(0.5, 2, 3)
        inputs = [t64(rng.normal(size=(5, 3, 2, 2))), t64(rng.normal(size=3)), t64(rng.normal(size=3))]
        fn = projected(lambda x, g, b: batch_norm(x, g, b, mean.copy(), var.copy(), train))
        assert grad_check(fn, inputs) < 1e-6


class TestElementwise:
    def test_known_values(self):
        assert elementwise("sigmoid", t64(0.0)).data.item() == 0.5
        assert elementwise("relu", t64(-2.5)).data.item() == 0.0
        assert elementwise("tanh", t64(1.0)).data.item() == pytest.approx(math.tanh(1.0), abs=1e-15)
        assert math.tanh(1.0) == pytest.approx(0.76159, abs=1e-5)

    def test_sigmoid_extremes_finite(self):
        out = elementwise("sigmoid", t64([-800.0, 800.0]))
        np.testing.assert_array_equal(out.data, [0.0, 1.0])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            elementwise("add", t64(np.ones(3)), t64(np.ones(4)))

    def test_scalar_broadcast(self):
        x = t64(np.ones((2, 2)))
        out = elementwise("mul", x, 3.0)
        ops.sum(out).backward()
        np.testing.assert_array_equal(x.grad, np.full((2, 2), 3.0))

    def test_unknown_op(self):
        with pytest.raises(ContractError):
            elementwise("softsign", t64(1.0))

    def test_sigmoid_chain_gradient(self):
        rng = np.random.default_rng(5)
        fn = projected(lambda x: ops.sigmoid(ops.sigmoid(ops.mul(x, 2.0))))
        assert grad_check(fn, [t64(rng.normal(size=(3, 3)))]) < 1e-7

    @given(st.lists(st.floats(-30, 30), min_size=1, max_size=20))
    @settings(max_examples=50, deadline=None)
    def test_sigmoid_tanh_identity(self, xs):
        x = np.asarray(xs)
        s = ops.sigmoid(t64(2 * x, grad=False)).data
        np.testing.assert_allclose(2 * s - 1, np.tanh(x), atol=1e-12)


class TestBackward:
    def test_sum_gives_ones(self):
        x = t64(np.arange(6.0).reshape(2, 3))
        ops.sum(x).backward()
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_square(self):
        x = t64(3.0)
        (x * x).backward()
        assert x.grad.item() == 6.0

    def test_fan_out_accumulates(self):
        rng = np.random.default_rng(6)
        a = rng.normal(size=4)
        x = t64(a)
        y = ops.add(ops.sum(ops.tanh(x)), ops.sum(ops.mul(x, x)))
        y.backward()
        np.testing.assert_allclose(x.grad, (1 - np.tanh(a) ** 2) + 2 * a, rtol=1e-12)

    def test_nonscalar_loss_rejected(self):
        with pytest.raises(ContractError):
            ops.tanh(t64(np.ones(3))).backward()

    def test_deep_chain_no_recursion_limit(self):
        x = t64(1.0)
        y = x
        for _ in range(5000):
            y = ops.add(y, 0.0)
        y.backward()
        assert x.grad.item() == 1.0

    def test_grads_accumulate_across_calls(self):
        x = t64(2.0)
        (x * x).backward()
        (x * x).backward()
        assert x.grad.item() == 8.0

    def test_no_grad_records_nothing(self):
        x = t64(1.0)
        with no_grad():
            y = x * x
        assert not y.requires_grad and y.is_leaf

    def test_float32_grad_dtype(self):
        x = Tensor(np.ones(3, dtype=np.float32), requires_grad=True)
        ops.sum(ops.mul(x, x)).backward()
        assert x.grad.dtype == np.float32

    def test_non_finite_forward_raises(self):
        with pytest.raises(NonFiniteError):
            ops.mul(t64([1e308]), t64([1e308]))

    def test_composite_graph_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        w = t64(rng.normal(size=(4, 3)))

        def fn(x, w):
            h = ops.tanh(linear(x, w))
            return ops.mean(ops.mul(h, ops.sigmoid(h)))

        assert grad_check(fn, [t64(rng.normal(size=(5, 4))), w]) < 1e-6

    def test_evaluation_deterministic(self):
        rng = np.random.default_rng(8)
        x, w = rng.normal(size=(2, 3, 6, 6)), rng.normal(size=(2, 3, 3, 3))
        a = conv2d(t64(x), t64(w)).data
        b = conv2d(t64(x), t64(w)).data
        assert a.tobytes() == b.tobytes()


class TestGradCheck:
    def test_rejects_float32(self):
        with pytest.raises(ContractError):
            grad_check(lambda x: ops.sum(x), [Tensor(np.ones(2, dtype=np.float32), requires_grad=True)])

    def test_detects_wrong_derivative(self):
        def bad_square(x):
            def backward(g):
                return (g * x.data,)  # missing factor 2

            return Tensor.from_op(x.data * x.data, (x,), backward, "bad_square")

        err = grad_check(projected(bad_square), [t64(np.random.default_rng(0).normal(size=5))], refine_above=1e-5)
        assert err > 1e-2


def _arrays():
    shapes = st.lists(st.integers(1, 4), min_size=0, max_size=4)
    dtypes = st.sampled_from([np.float32, np.float64, np.uint8])
    return st.tuples(shapes, dtypes, st.integers(0, 2**31))


class TestTensorFiles:
    def test_header_layout(self):
        blob = tio.encode(np.arange(6, dtype=np.float32).reshape(2, 3))
        assert blob[:4] == b"TNSR"
        assert blob[4] == 0 and blob[5] == 2
        assert int.from_bytes(blob[6:10], "little") == 2
        assert int.from_bytes(blob[10:14], "little") == 3
        assert len(blob) == 14 + 6 * 4

    @given(_arrays())
    @settings(max_examples=60, deadline=None)
    def test_round_trip(self, spec):
        shape, dtype, seed = spec
        rng = np.random.default_rng(seed)
        a = (rng.normal(size=shape) * 50).astype(dtype)
        b = tio.decode(tio.encode(a))
        assert b.dtype == a.dtype and b.shape == a.shape
        assert b.tobytes() == a.tobytes()

    def test_file_round_trip(self, tmp_path):
        a = np.random.default_rng(0).normal(size=(3, 4))
        tio.save(tmp_path / "a.tnsr", a)
        assert tio.load(tmp_path / "a.tnsr").tobytes() == a.tobytes()

    def test_bad_magic(self):
        with pytest.raises(tio.TensorFormatError):
            tio.decode(b"XXXX\x00\x00")

    def test_truncated_payload(self):
        blob = tio.encode(np.ones(4))
        with pytest.raises(tio.TensorFormatError):
            tio.decode(blob[:-1])

    def test_unsupported_dtype(self):
        with pytest.raises(tio.TensorFormatError):
            tio.encode(np.ones(2, dtype=np.int32))
