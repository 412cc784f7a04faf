"""Affine coupling layer and dense subnet tests."""

import math

import numpy as np
import pytest
import torch

from wicnet import tensor as T
from wicnet.coupling import (CouplingLayer, DenseSubnet, coupling_forward,
                             coupling_reverse, dense_subnet_eval)
from wicnet.errors import DimensionError, UsageError

from reference import fd_grad, ref_conv3x3, rel_err


def _randomize_projection(subnet, rng, scale):
    """Replace the zero-initialized final projection with random weights."""
    key = f"conv{DenseSubnet.STAGES}.w"
    w = subnet.params()[key]
    new = rng.standard_normal(tuple(w.shape)) * scale
    subnet.set_param(key, torch.from_numpy(new).to(w.dtype))


def _const_fn(value, shape):
    return lambda a: T.constant(np.full(shape, value))


class TestIdentityStart:
    def test_fresh_layer_forward_returns_input(self, rng):
        layer = CouplingLayer(4, growth=4, seed=7)
        x = rng.standard_normal((2, 4, 6, 6))
        y = coupling_forward(layer, T.constant(x))
        assert np.array_equal(y.numpy(), x)

    def test_fresh_layer_reverse_returns_input(self, rng):
        layer = CouplingLayer(4, growth=4, seed=7)
        y = rng.standard_normal((2, 4, 6, 6))
        x = coupling_reverse(layer, T.constant(y))
        assert np.array_equal(x.numpy(), y)


class TestScalarInstance:
    """1x1 image, one channel per half, constant scale/translation."""

    def _layer(self):
        return CouplingLayer(2, split_at=1,
                             scale_fn=_const_fn(math.log(2.0), (1, 1, 1, 1)),
                             trans_fn=_const_fn(1.0, (1, 1, 1, 1)))

    def test_forward_hand_value(self):
        x = T.constant(np.array([1.0, 2.0]).reshape(1, 2, 1, 1))
        y = coupling_forward(self._layer(), x).numpy().ravel()
        assert y[0] == 1.0
        assert abs(y[1] - 5.0) < 1e-12

    def test_reverse_hand_value(self):
        y = T.constant(np.array([1.0, 5.0]).reshape(1, 2, 1, 1))
        x = coupling_reverse(self._layer(), y).numpy().ravel()
        assert x[0] == 1.0
        assert abs(x[1] - 2.0) < 1e-12


class TestRoundTrip:
    def _random_layer(self, seed, dtype):
        layer = CouplingLayer(3, growth=4, seed=seed, dtype=dtype)
        rng = np.random.default_rng(seed + 1)
        _randomize_projection(layer.subnet_s, rng, 0.5)
        _randomize_projection(layer.subnet_t, rng, 0.5)
        return layer

    def test_f64_round_trips_over_100_seeds(self):
        worst = 0.0
        for seed in range(100):
            layer = self._random_layer(seed, "f64")
            x = np.random.default_rng(1000 + seed).standard_normal((1, 3, 8, 8))
            y = coupling_forward(layer, T.constant(x))
            back = coupling_reverse(layer, y).numpy()
            worst = max(worst, float(np.max(np.abs(back - x))))
        assert worst <= 1e-10

    def test_f32_round_trips_over_100_seeds(self):
        worst = 0.0
        for seed in range(100):
            layer = self._random_layer(seed, "f32")
            x = np.random.default_rng(2000 + seed).standard_normal(
                (1, 3, 8, 8)).astype(np.float32)
            y = coupling_forward(layer, T.constant(x))
            back = coupling_reverse(layer, y).numpy()
            worst = max(worst, float(np.max(np.abs(back - x))))
        assert worst <= 1e-4

    def test_reverse_then_forward_is_identity(self, rng):
        layer = self._random_layer(5, "f64")
        y = rng.standard_normal((2, 3, 8, 8))
        x = coupling_reverse(layer, T.constant(y))
        again = coupling_forward(layer, x).numpy()
        assert np.max(np.abs(again - y)) <= 1e-10


class TestScaleClamp:
    def test_exponent_saturates_at_clamp(self, rng):
        # Huge raw subnet outputs must squash to +/- s_clamp, keeping the
        # multiplier inside [e^-2, e^2].
        layer = CouplingLayer(2, growth=2, seed=11)
        w5 = layer.subnet_s.params()["conv5.w"]
        layer.subnet_s.set_param(
            "conv5.w", torch.full(tuple(w5.shape), 50.0, dtype=w5.dtype))
        x = rng.standard_normal((1, 2, 8, 8))
        x[:, 1] = 1.0
        y = coupling_forward(layer, T.constant(x)).numpy()
        mult = y[:, 1]
        assert np.all(mult <= math.exp(2.0) + 1e-9)
        assert np.all(mult >= math.exp(-2.0) - 1e-9)
        assert np.max(np.abs(np.log(mult))) > 1.99

    def test_forward_magnitude_bound(self, rng):
        layer = CouplingLayer(4, growth=4, seed=13)
        _randomize_projection(layer.subnet_s, rng, 2.0)
        _randomize_projection(layer.subnet_t, rng, 2.0)
        x = rng.standard_normal((1, 4, 8, 8)) * 3.0
        a = x[:, :layer.split_at]
        f_t = dense_subnet_eval(layer.subnet_t, T.constant(a)).numpy()
        y = coupling_forward(layer, T.constant(x)).numpy()
        y_b = y[:, layer.split_at:]
        bound = np.max(np.abs(x[:, layer.split_at:])) * math.exp(2.0) \
            + np.max(np.abs(f_t))
        assert np.max(np.abs(y_b)) <= bound + 1e-9


class TestHalving:
    def test_default_split_is_ceil_half(self):
        assert CouplingLayer(5, growth=2).split_at == 3
        assert CouplingLayer(6, growth=2).split_at == 3

    def test_unswapped_layer_passes_first_half_through(self, rng):
        layer = CouplingLayer(4, growth=2, seed=3)
        _randomize_projection(layer.subnet_s, rng, 0.5)
        _randomize_projection(layer.subnet_t, rng, 0.5)
        x = rng.standard_normal((1, 4, 5, 5))
        y = coupling_forward(layer, T.constant(x)).numpy()
        assert np.array_equal(y[:, :2], x[:, :2])
        assert not np.array_equal(y[:, 2:], x[:, 2:])

    def test_swapped_layer_passes_second_half_through(self, rng):
        layer = CouplingLayer(4, growth=2, seed=3, swap=True)
        _randomize_projection(layer.subnet_s, rng, 0.5)
        _randomize_projection(layer.subnet_t, rng, 0.5)
        x = rng.standard_normal((1, 4, 5, 5))
        y = coupling_forward(layer, T.constant(x)).numpy()
        assert np.array_equal(y[:, 2:], x[:, 2:])
        assert not np.array_equal(y[:, :2], x[:, :2])

    def test_swap_with_stub_functions(self, rng):
        layer = CouplingLayer(4, swap=True,
                              scale_fn=_const_fn(0.0, (1, 2, 5, 5)),
                              trans_fn=_const_fn(1.0, (1, 2, 5, 5)))
        x = rng.standard_normal((1, 4, 5, 5))
        y = coupling_forward(layer, T.constant(x)).numpy()
        assert np.allclose(y[:, :2], x[:, :2] + 1.0)
        assert np.array_equal(y[:, 2:], x[:, 2:])


class TestValidation:
    def test_rejects_single_channel(self):
        with pytest.raises(DimensionError):
            CouplingLayer(1, growth=2)

    def test_rejects_degenerate_split(self):
        with pytest.raises(DimensionError):
            CouplingLayer(4, split_at=0, growth=2)
        with pytest.raises(DimensionError):
            CouplingLayer(4, split_at=4, growth=2)

    def test_rejects_channel_mismatch(self, rng):
        layer = CouplingLayer(4, growth=2)
        with pytest.raises(DimensionError):
            coupling_forward(layer, T.constant(rng.standard_normal((1, 3, 4, 4))))
        with pytest.raises(DimensionError):
            coupling_reverse(layer, T.constant(rng.standard_normal((1, 5, 4, 4))))

    def test_rejects_partial_stub_override(self):
        with pytest.raises(UsageError):
            CouplingLayer(4, scale_fn=_const_fn(0.0, (1, 2, 4, 4)))


class TestDenseSubnet:
    def test_zero_projection_gives_zero_output(self, rng):
        sub = DenseSubnet(3, 2, growth=4, seed=21)
        x = rng.standard_normal((2, 3, 6, 6))
        y = dense_subnet_eval(sub, T.constant(x)).numpy()
        assert np.array_equal(y, np.zeros_like(y))

    def test_zero_input_zero_bias_gives_zero_output(self, rng):
        sub = DenseSubnet(3, 2, growth=4, seed=22)
        _randomize_projection(sub, rng, 1.0)
        y = dense_subnet_eval(sub, T.constant(np.zeros((1, 3, 6, 6)))).numpy()
        assert np.array_equal(y, np.zeros_like(y))

    def test_single_stage_hand_weights_match_direct_convolution(self, rng):
        # Zero out stages 1-4 so the projection sees [x, 0, ..., 0]; the
        # output then reduces to one 3x3 convolution of the input channel.
        sub = DenseSubnet(1, 1, growth=2, seed=23)
        for i in range(1, 5):
            w = sub.params()[f"conv{i}.w"]
            sub.set_param(f"conv{i}.w", torch.zeros_like(w))
        kernel = rng.standard_normal((1, 1, 3, 3))
        w5 = np.zeros((1, 9, 3, 3))
        w5[:, :1] = kernel
        sub.set_param("conv5.w", torch.from_numpy(w5))
        sub.set_param("conv5.b", torch.tensor([0.7], dtype=torch.float64))
        x = rng.standard_normal((1, 1, 3, 3))
        y = dense_subnet_eval(sub, T.constant(x)).numpy()
        expected = ref_conv3x3(x, kernel, bias=np.array([0.7]))
        assert np.allclose(y, expected, atol=1e-12)

    def test_every_stage_influences_output(self, rng):
        # Dense connectivity: with a live projection, each stage's weights
        # must receive a nonzero gradient.
        sub = DenseSubnet(2, 2, growth=2, seed=24)
        _randomize_projection(sub, rng, 0.5)
        tape = T.Tape()
        bound = {k: tape.leaf(v, name=k) for k, v in sub.params().items()}
        x = tape.leaf(rng.standard_normal((1, 2, 4, 4)), name="x")
        y = dense_subnet_eval(sub, x, bound)
        probe = T.constant(rng.standard_normal((1, 2, 4, 4)))
        grads = tape.backward(T.sum_all(T.mul(y, probe)))
        for i in range(1, 6):
            assert torch.any(grads[f"conv{i}.w"] != 0), f"stage {i} disconnected"
        assert torch.any(grads["x"] != 0)

    def test_rejects_channel_mismatch(self, rng):
        sub = DenseSubnet(3, 2, growth=2)
        with pytest.raises(DimensionError):
            dense_subnet_eval(sub, T.constant(rng.standard_normal((1, 4, 4, 4))))

    def test_construction_is_deterministic(self):
        a = DenseSubnet(3, 2, growth=4, seed=9).params()
        b = DenseSubnet(3, 2, growth=4, seed=9).params()
        for k in a:
            assert torch.equal(a[k], b[k])


class TestCouplingGradients:
    def test_forward_loss_gradient_matches_finite_differences(self, rng):
        layer = CouplingLayer(2, growth=2, seed=31)
        _randomize_projection(layer.subnet_s, rng, 0.3)
        _randomize_projection(layer.subnet_t, rng, 0.3)
        x_np = rng.standard_normal((1, 2, 4, 4))
        probe = rng.standard_normal((1, 2, 4, 4))

        tape = T.Tape()
        bound = {k: tape.leaf(v, name=k) for k, v in layer.params().items()}
        x = tape.leaf(x_np, name="x")
        y = coupling_forward(layer, x, bound)
        grads = tape.backward(T.sum_all(T.mul(y, T.constant(probe))))

        def loss_with(key, value):
            saved = layer.params()[key]
            layer.set_param(key, torch.from_numpy(np.ascontiguousarray(value)))
            out = coupling_forward(layer, T.constant(x_np)).numpy()
            layer.set_param(key, saved)
            return float(np.sum(out * probe))

        for key in layer.params():
            fd = fd_grad(lambda v, k=key: loss_with(k, v),
                         layer.params()[key].numpy().copy())
            assert rel_err(grads[key].numpy(), fd) <= 1e-4, key

        def loss_at_x(v):
            out = coupling_forward(layer, T.constant(v)).numpy()
            return float(np.sum(out * probe))

        fd_x = fd_grad(loss_at_x, x_np)
        assert rel_err(grads["x"].numpy(), fd_x) <= 1e-4

    def test_reverse_loss_gradient_matches_finite_differences(self, rng):
        layer = CouplingLayer(2, growth=2, seed=37)
        _randomize_projection(layer.subnet_s, rng, 0.3)
        _randomize_projection(layer.subnet_t, rng, 0.3)
        y_np = rng.standard_normal((1, 2, 4, 4))
        probe = rng.standard_normal((1, 2, 4, 4))

        tape = T.Tape()
        bound = {k: tape.leaf(v, name=k) for k, v in layer.params().items()}
        y = tape.leaf(y_np, name="y")
        x = coupling_reverse(layer, y, bound)
        grads = tape.backward(T.sum_all(T.mul(x, T.constant(probe))))

        def loss_with(key, value):
            saved = layer.params()[key]
            layer.set_param(key, torch.from_numpy(np.ascontiguousarray(value)))
            out = coupling_reverse(layer, T.constant(y_np)).numpy()
            layer.set_param(key, saved)
            return float(np.sum(out * probe))

        for key in layer.params():
            fd = fd_grad(lambda v, k=key: loss_with(k, v),
                         layer.params()[key].numpy().copy())
            assert rel_err(grads[key].numpy(), fd) <= 1e-4, key
