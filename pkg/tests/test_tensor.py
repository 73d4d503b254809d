"""
Tests for the tensor core: tape semantics, op values, analytic gradients, FLOPs and tensor files.
"""

import math

import numpy as np
import pytest

from src.errors import ArgumentError, ShapeError, TensorFileError
from src.tensor import (
    ComputationTape,
    TapeRecord,
    Tensor,
    active_tape,
    backward,
    count_flops,
    flop_scope,
    no_grad,
    ops,
    parameter,
)
from src.tensor.gradcheck import check_gradients, element_ok
from src.tensor.io import decode_tensor, encode_tensor, load_tensor, save_tensor


def f64(rng, *shape, scale=1.0):
    return parameter(rng.standard_normal(shape) * scale, dtype=np.float64)


def weighted_sum(out: Tensor, rng_seed: int = 7) -> Tensor:
    """Scalar probe sum(out * W) with fixed random W so every output entry matters."""
    w = np.random.default_rng(rng_seed).standard_normal(out.shape)
    return ops.sum(ops.mul(out, w))


def assert_grads(fn, *named):
    result = check_gradients(fn, list(named))
    assert result.ok, result.failures[:5]
    assert result.checked > 0


class TestTape:
    def test_nothing_recorded_outside_a_tape(self, rng):
        x = f64(rng, 3)
        y = ops.mul(x, 2.0)
        assert not y.requires_grad

    def test_records_only_ops_on_grad_inputs(self, rng):
        x = f64(rng, 3)
        c = Tensor(np.ones(3))
        with ComputationTape() as tape:
            ops.add(c, c)
            ops.mul(x, c)
        assert len(tape) == 1
        assert tape.records[0].op == "mul"

    def test_no_grad_suspends_recording(self, rng):
        x = f64(rng, 3)
        with ComputationTape() as tape:
            with no_grad():
                ops.exp(x)
        assert len(tape) == 0

    def test_leaf_gradients_accumulate_across_calls(self, rng):
        x = f64(rng, 4)
        for _ in range(2):
            with ComputationTape() as tape:
                loss = ops.sum(ops.mul(x, x))
            backward(tape, loss)
        np.testing.assert_allclose(x.grad, 4 * x.data)

    def test_shared_input_gets_both_contributions(self, rng):
        x = f64(rng, 3)
        with ComputationTape() as tape:
            y = ops.exp(x)
            loss = ops.sum(ops.add(y, ops.mul(y, x)))
        backward(tape, loss)
        expected = np.exp(x.data) * (1 + x.data) + np.exp(x.data)
        np.testing.assert_allclose(x.grad, expected, rtol=1e-12)

    def test_non_scalar_loss_rejected(self, rng):
        x = f64(rng, 3)
        with ComputationTape() as tape:
            y = ops.mul(x, 2.0)
        with pytest.raises(ArgumentError):
            backward(tape, y)

    def test_constant_loss_rejected(self):
        with ComputationTape() as tape:
            loss = ops.sum(Tensor(np.ones(3)))
        with pytest.raises(ArgumentError):
            backward(tape, loss)

    def test_full_sum_of_a_vector(self, rng):
        x = f64(rng, 3)
        with ComputationTape() as tape:
            loss = ops.sum(x)
        assert loss.shape == ()
        backward(tape, loss)
        np.testing.assert_array_equal(x.grad, np.ones(3))

    def test_full_mean_of_a_matrix(self, rng):
        x = f64(rng, 2, 5)
        with ComputationTape() as tape:
            loss = ops.mean(ops.mul(x, 3.0))
        assert loss.shape == ()
        backward(tape, loss)
        np.testing.assert_allclose(x.grad, np.full((2, 5), 0.3))

    def test_scalar_results_chain(self, rng):
        x = f64(rng, 2, 3)
        with ComputationTape() as tape:
            total = ops.add(ops.sum(x), ops.mean(x, axis=(0, 1)))
            loss = ops.mul(ops.index(x, (1, 2)), total)
        assert loss.shape == ()
        backward(tape, loss)
        expected = np.full((2, 3), x.data[1, 2] * (1 + 1 / 6))
        expected[1, 2] += x.data.sum() + x.data.mean()
        np.testing.assert_allclose(x.grad, expected, rtol=1e-12)

    def test_zero_dimensional_tensors_stay_scalar(self):
        assert Tensor(np.float64(2.0)).shape == ()
        assert Tensor(1.5).item() == 1.5

    def test_operator_sugar(self, rng):
        x = f64(rng, 2, 2)
        y = (x * 2 + 1 - x) / 2
        np.testing.assert_allclose(y.data, (x.data + 1) / 2)
        assert (x @ x).shape == (2, 2)


class TestGradients:
    def test_elementwise(self, rng):
        a, b = f64(rng, 3, 4), f64(rng, 4)
        assert_grads(lambda: weighted_sum(ops.add(a, b)), ("a", a), ("b", b))
        assert_grads(lambda: weighted_sum(ops.mul(a, b)), ("a", a), ("b", b))
        assert_grads(lambda: weighted_sum(ops.sub(a, b)), ("a", a), ("b", b))

    def test_div_log_sqrt_power(self, rng):
        pos = parameter(rng.uniform(0.5, 2.0, size=(3, 3)), dtype=np.float64)
        den = parameter(rng.uniform(1.0, 2.0, size=(3, 3)), dtype=np.float64)
        assert_grads(lambda: weighted_sum(ops.div(pos, den)), ("pos", pos), ("den", den))
        assert_grads(lambda: weighted_sum(ops.log(pos)), ("pos", pos))
        assert_grads(lambda: weighted_sum(ops.sqrt(pos)), ("pos", pos))
        assert_grads(lambda: weighted_sum(ops.power(pos, 2.5)), ("pos", pos))

    def test_activations(self, rng):
        x = f64(rng, 5, 3)
        assert_grads(lambda: weighted_sum(ops.gelu(x)), ("x", x))
        assert_grads(lambda: weighted_sum(ops.sigmoid(x)), ("x", x))
        assert_grads(lambda: weighted_sum(ops.exp(x)), ("x", x))

    def test_softmax_and_layer_norm(self, rng):
        x = f64(rng, 4, 6)
        gain, bias = f64(rng, 6), f64(rng, 6)
        assert_grads(lambda: weighted_sum(ops.softmax(x, axis=-1)), ("x", x))
        assert_grads(lambda: weighted_sum(ops.layer_norm(x, gain, bias)), ("x", x), ("gain", gain), ("bias", bias))

    def test_bce_with_logits(self, rng):
        x = f64(rng, 4, 4, scale=3.0)
        t = rng.uniform(size=(4, 4))
        assert_grads(lambda: ops.sum(ops.binary_cross_entropy_with_logits(x, t)), ("x", x))

    def test_reductions_and_shapes(self, rng):
        x = f64(rng, 2, 3, 4)
        assert_grads(lambda: weighted_sum(ops.sum(x, axis=(1, 2))), ("x", x))
        assert_grads(lambda: weighted_sum(ops.mean(x, axis=0, keepdims=True)), ("x", x))
        assert_grads(lambda: weighted_sum(ops.transpose(ops.reshape(x, (6, 4)), (1, 0))), ("x", x))
        assert_grads(lambda: weighted_sum(ops.index(x, np.array([1, 1, 0]))), ("x", x))
        y = f64(rng, 2, 3, 4)
        assert_grads(lambda: weighted_sum(ops.concat([x, y], axis=1)), ("x", x), ("y", y))
        assert_grads(lambda: weighted_sum(ops.stack([x, y], axis=0)), ("x", x), ("y", y))

    def test_batched_matmul(self, rng):
        a, b = f64(rng, 2, 3, 4), f64(rng, 4, 5)
        assert_grads(lambda: weighted_sum(ops.matmul(a, b)), ("a", a), ("b", b))

    @pytest.mark.parametrize("stride,padding,size", [(1, 1, 6), (2, 1, 8), (2, 1, 7), (1, 0, 5)])
    def test_conv2d(self, rng, stride, padding, size):
        x = f64(rng, 2, size, size)
        w = f64(rng, 3, 2, 3, 3)
        b = f64(rng, 3)
        fn = lambda: weighted_sum(ops.conv2d(x, w, b, stride=stride, padding=padding))  # noqa: E731
        assert_grads(fn, ("x", x), ("w", w), ("b", b))

    def test_pooling(self, rng):
        avg = f64(rng, 2, 4, 4)
        assert_grads(lambda: weighted_sum(ops.avg_pool2d(avg, 2)), ("x", avg))
        # well separated values keep the argmax fixed under the probe step
        spread = parameter(rng.permutation(32).reshape(2, 4, 4) * 0.1, dtype=np.float64)
        assert_grads(lambda: weighted_sum(ops.max_pool2d(spread, 2)), ("x", spread))

    @pytest.mark.parametrize("factor", [2, 4])
    def test_bilinear_upsample(self, rng, factor):
        x = f64(rng, 2, 3, 2)
        assert_grads(lambda: weighted_sum(ops.bilinear_upsample(x, factor)), ("x", x))


class TestOpValues:
    def test_conv2d_matches_loop(self, rng):
        x = rng.standard_normal((2, 5, 5))
        w = rng.standard_normal((3, 2, 3, 3))
        out = ops.conv2d(Tensor(x), Tensor(w), stride=2, padding=1).data
        padded = np.pad(x, ((0, 0), (1, 1), (1, 1)))
        assert out.shape == (3, 3, 3)
        for o in range(3):
            for i in range(3):
                for j in range(3):
                    expected = np.sum(padded[:, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3] * w[o])
                    assert out[o, i, j] == pytest.approx(expected, abs=1e-12)

    def test_conv2d_output_size_floors(self):
        x = Tensor(np.zeros((1, 7, 7)))
        w = Tensor(np.zeros((1, 1, 3, 3)))
        assert ops.conv2d(x, w, stride=2, padding=1).shape == (1, 4, 4)

    def test_conv2d_rejects_channel_mismatch_and_even_kernels(self):
        with pytest.raises(ShapeError):
            ops.conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
        with pytest.raises(ShapeError):
            ops.conv2d(Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 1, 2, 2))))

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeError):
            ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_max_pool_tie_goes_to_first_element(self):
        x = parameter(np.zeros((1, 2, 2)), dtype=np.float64)
        with ComputationTape() as tape:
            loss = ops.sum(ops.max_pool2d(x, 2))
        backward(tape, loss)
        np.testing.assert_array_equal(x.grad, [[[1.0, 0.0], [0.0, 0.0]]])

    def test_pool_requires_divisible_size(self):
        with pytest.raises(ShapeError):
            ops.max_pool2d(Tensor(np.zeros((1, 6, 6))), 4)

    def test_upsample_identity_and_bad_factor(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 3)))
        np.testing.assert_array_equal(ops.bilinear_upsample(x, 1).data, x.data)
        with pytest.raises(ArgumentError):
            ops.bilinear_upsample(x, 0)
        with pytest.raises(ArgumentError):
            ops.bilinear_upsample(x, 1.5)

    def test_upsample_preserves_constants(self):
        x = Tensor(np.full((1, 2, 3), 2.5))
        np.testing.assert_allclose(ops.bilinear_upsample(x, 4).data, 2.5, rtol=1e-12)

    def test_gelu_values(self):
        x = Tensor(np.array([0.0, 1.0, -1.0]))
        cdf = 0.5 * (1 + math.erf(1 / math.sqrt(2)))
        np.testing.assert_allclose(ops.gelu(x).data, [0.0, cdf, -(1 - cdf)], rtol=1e-12)

    def test_clip_values_and_gradient(self):
        x = parameter(np.array([-2.0, -1e-9, 0.5, 1.0, 3.0]))
        with ComputationTape() as tape:
            y = ops.clip(x, 0.0, 1.0)
            loss = ops.sum(ops.scale(y, 2.0))
        np.testing.assert_array_equal(y.data, [0.0, 0.0, 0.5, 1.0, 1.0])
        backward(tape, loss)
        np.testing.assert_array_equal(x.grad, [0.0, 0.0, 2.0, 2.0, 0.0])
        np.testing.assert_array_equal(ops.clip(Tensor(np.array([-3.0, 4.0])), 0.0).data, [0.0, 4.0])

    def test_softmax_rows_sum_to_one(self, rng):
        x = Tensor(rng.standard_normal((3, 5)) * 50)
        np.testing.assert_allclose(ops.softmax(x).data.sum(axis=-1), 1.0, rtol=1e-12)

    def test_layer_norm_example(self):
        x = Tensor(np.array([1.0, 2.0, 3.0, 4.0]))
        out = ops.layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)))
        np.testing.assert_allclose(out.data, [-1.3416, -0.4472, 0.4472, 1.3416], atol=1e-3)

    def test_layer_norm_normalizes_rows(self, rng):
        x = Tensor(rng.standard_normal((3, 16)) * 4 + 2)
        out = ops.layer_norm(x, Tensor(np.ones(16)), Tensor(np.zeros(16))).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-5)

    @pytest.mark.parametrize("k", [4, 8])
    def test_max_pool_is_idempotent_on_pooled_maps(self, rng, k):
        x = rng.standard_normal((2, 16, 16))
        pooled = ops.max_pool2d(Tensor(x), k).data
        upsampled = np.repeat(np.repeat(pooled, k, axis=1), k, axis=2)
        np.testing.assert_array_equal(ops.max_pool2d(Tensor(upsampled), k).data, pooled)
        assert np.isin(pooled, x).all()

    def test_dtype_is_preserved(self, rng):
        x = Tensor(rng.standard_normal((2, 3)).astype(np.float32))
        assert ops.add(x, 1.0).dtype == np.float32
        assert ops.gelu(x).dtype == np.float32


class TestFlops:
    def test_matmul_counts_2mkn(self):
        with count_flops() as counter:
            ops.matmul(Tensor(np.zeros((3, 4))), Tensor(np.zeros((4, 5))))
        assert counter.total == 2 * 3 * 4 * 5

    def test_conv2d_counts_per_output_element(self):
        with count_flops() as counter:
            ops.conv2d(Tensor(np.zeros((2, 4, 4))), Tensor(np.zeros((3, 2, 3, 3))), padding=1)
        assert counter.by_op["conv2d"] == 2 * 2 * 9 * (3 * 4 * 4)

    def test_scopes_nest(self):
        x = Tensor(np.zeros(10))
        with count_flops() as counter:
            with flop_scope("outer"):
                ops.add(x, x)
                with flop_scope("inner"):
                    ops.mul(x, x)
            ops.neg(x)
        assert counter.total == 30
        assert counter.scope("outer") == 20
        assert counter.scope("inner") == 10
        assert counter.scope("missing") == 0


class TestGradCheckRule:
    def test_element_rule(self):
        assert element_ok(1.0, 1.0 + 1e-7)
        assert not element_ok(1.0, 1.001)
        assert element_ok(5e-9, 0.0)

    def test_detects_wrong_gradient(self, rng):
        x = f64(rng, 3)

        def fn():
            # forward of 2x with a recorded adjoint of 3
            out = Tensor(x.data * 2, requires_grad=True)
            out.is_leaf = False
            tape = active_tape()
            if tape is not None:
                tape.record(TapeRecord("bad", (x,), out, lambda g: (3 * g,)))
            return ops.sum(out)

        assert not check_gradients(fn, [("x", x)]).ok


class TestTensorFiles:
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_round_trip_is_bit_exact(self, tmp_path, rng, dtype):
        t = Tensor(rng.standard_normal((2, 3, 4)).astype(dtype))
        save_tensor(t, tmp_path / "t.kvt")
        back = load_tensor(tmp_path / "t.kvt")
        assert back.dtype == t.dtype
        assert back.data.tobytes() == t.data.tobytes()

    def test_rejects_bad_magic_and_truncation(self, rng):
        blob = encode_tensor(Tensor(rng.standard_normal(4)))
        with pytest.raises(TensorFileError):
            decode_tensor(b"NOTATENS" + blob[8:])
        with pytest.raises(TensorFileError):
            decode_tensor(blob[:-3])
