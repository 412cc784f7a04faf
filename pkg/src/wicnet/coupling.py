"""Affine coupling layer: an exact bijection driven by two dense subnets.

One half of the channels passes through unchanged and steers an elementwise
affine map of the other half: y_b = x_b * exp(F_s(y_a)) + F_t(y_a).  The
scale exponent is soft-clamped inside F_s (s_clamp * tanh(raw / s_clamp))
so exp never overflows while invertibility stays exact.  Consecutive layers
alternate which half is transformed, otherwise half the channels would
never change.
"""

from __future__ import annotations

import math

import numpy as np
import torch

from . import tensor as T
from .errors import DimensionError, UsageError

LEAKY_SLOPE = 0.2


class DenseSubnet:
    """Five 3x3 conv stages with dense connectivity.

    Stages 1-4 emit ``growth`` channels each (LeakyReLU activations) and
    every stage sees the input plus all previous stage outputs.  Stage 5
    projects to the target channel count and is zero-initialized, which
    makes a fresh coupling layer the identity map.
    """

    STAGES = 5

    def __init__(self, c_in, c_out, growth=32, seed=0, dtype="f64", name="subnet"):
        if c_in < 1 or c_out < 1 or growth < 1:
            raise DimensionError("subnet channel counts must be positive")
        self.c_in = c_in
        self.c_out = c_out
        self.growth = growth
        self.name = name
        rng = np.random.default_rng(seed)
        self._params = {}
        dt = T.DTYPES[dtype]
        for i in range(self.STAGES):
            cin = c_in + i * growth
            cout = growth if i < self.STAGES - 1 else c_out
            if i < self.STAGES - 1:
                std = math.sqrt(2.0 / ((1.0 + LEAKY_SLOPE ** 2) * cin * 9))
                w = rng.standard_normal((cout, cin, 3, 3)) * std
            else:
                w = np.zeros((cout, cin, 3, 3))
            self._params[f"conv{i + 1}.w"] = torch.from_numpy(w).to(dt)
            self._params[f"conv{i + 1}.b"] = torch.zeros(cout, dtype=dt)

    def params(self):
        return dict(self._params)

    def set_param(self, key, value):
        if key not in self._params:
            raise KeyError(key)
        self._params[key] = value

    def to_dtype(self, dtype):
        dt = T.DTYPES[dtype]
        for k in self._params:
            self._params[k] = self._params[k].to(dt)
        return self


def dense_subnet_eval(subnet, x, bound=None):
    """Run the subnet on a rank-4 tensor; spatial size is preserved.

    ``bound`` maps parameter keys to tracked leaves during training; the
    default uses the stored (untracked) values.
    """
    if x.shape[1] != subnet.c_in:
        raise DimensionError(f"{subnet.name}: input has {x.shape[1]} channels, "
                             f"expected {subnet.c_in}")

    def p(key):
        if bound is not None:
            return bound[key]
        return T.Tensor(subnet._params[key])

    feats = [x]
    for i in range(subnet.STAGES):
        inp = feats[0] if len(feats) == 1 else T.concat_channels(feats)
        h = T.conv3x3(inp, p(f"conv{i + 1}.w"), p(f"conv{i + 1}.b"))
        if i < subnet.STAGES - 1:
            h = T.leaky_relu(h, LEAKY_SLOPE)
            feats.append(h)
        else:
            return h
    raise AssertionError("unreachable")


class CouplingLayer:
    """Split index, two subnets, and the scale clamp.

    ``swap`` selects which half passes through unchanged (alternated across
    consecutive layers when assembling networks).  For tests, ``scale_fn``
    and ``trans_fn`` may replace the subnets entirely; they receive the
    pass-through half and must emit the transformed half's channel count.
    """

    def __init__(self, channels, split_at=None, swap=False, s_clamp=2.0,
                 growth=32, seed=0, dtype="f64", name="coupling",
                 scale_fn=None, trans_fn=None):
        if channels < 2:
            raise DimensionError("coupling needs at least 2 channels")
        self.channels = channels
        self.split_at = math.ceil(channels / 2) if split_at is None else int(split_at)
        if not 0 < self.split_at < channels:
            raise DimensionError(f"split index {self.split_at} outside (0, {channels})")
        self.swap = bool(swap)
        self.s_clamp = float(s_clamp)
        self.name = name
        c_a = self.split_at if not self.swap else channels - self.split_at
        c_b = channels - c_a
        if (scale_fn is None) != (trans_fn is None):
            raise UsageError("scale_fn and trans_fn must be overridden together")
        self.scale_fn = scale_fn
        self.trans_fn = trans_fn
        if scale_fn is None:
            ss = seed if isinstance(seed, np.random.SeedSequence) \
                else np.random.SeedSequence(seed)
            seeds = ss.spawn(2)
            self.subnet_s = DenseSubnet(c_a, c_b, growth=growth,
                                        seed=seeds[0], dtype=dtype,
                                        name=f"{name}.s")
            self.subnet_t = DenseSubnet(c_a, c_b, growth=growth,
                                        seed=seeds[1], dtype=dtype,
                                        name=f"{name}.t")
        else:
            self.subnet_s = None
            self.subnet_t = None

    def params(self):
        out = {}
        if self.subnet_s is not None:
            for k, v in self.subnet_s.params().items():
                out[f"s.{k}"] = v
            for k, v in self.subnet_t.params().items():
                out[f"t.{k}"] = v
        return out

    def set_param(self, key, value):
        sub, rest = key.split(".", 1)
        {"s": self.subnet_s, "t": self.subnet_t}[sub].set_param(rest, value)

    def to_dtype(self, dtype):
        if self.subnet_s is not None:
            self.subnet_s.to_dtype(dtype)
            self.subnet_t.to_dtype(dtype)
        return self

    def _halves(self, x):
        first, second = T.split_channels(x, self.split_at)
        return (second, first) if self.swap else (first, second)

    def _join(self, a, b):
        parts = [b, a] if self.swap else [a, b]
        return T.concat_channels(parts)

    def _scale(self, a, bound=None):
        """F_s: subnet output soft-clamped to [-s_clamp, s_clamp]."""
        if self.scale_fn is not None:
            return self.scale_fn(a)
        sub = {k[2:]: v for k, v in bound.items() if k.startswith("s.")} \
            if bound is not None else None
        raw = dense_subnet_eval(self.subnet_s, a, sub)
        return T.scale(T.tanh(T.scale(raw, 1.0 / self.s_clamp)), self.s_clamp)

    def _trans(self, a, bound=None):
        if self.trans_fn is not None:
            return self.trans_fn(a)
        sub = {k[2:]: v for k, v in bound.items() if k.startswith("t.")} \
            if bound is not None else None
        return dense_subnet_eval(self.subnet_t, a, sub)

    def _scale_trans(self, a, bound=None):
        """Both subnets on the same input, as one fused grouped evaluation."""
        if self.scale_fn is not None:
            return self._scale(a), self._trans(a)

        def stage_params(prefix, subnet):
            out = []
            for i in range(DenseSubnet.STAGES):
                kw, kb = f"conv{i + 1}.w", f"conv{i + 1}.b"
                if bound is not None:
                    out.append((bound[f"{prefix}.{kw}"], bound[f"{prefix}.{kb}"]))
                else:
                    out.append((T.Tensor(subnet._params[kw]),
                                T.Tensor(subnet._params[kb])))
            return out

        both = T.dense_stack(a, stage_params("s", self.subnet_s),
                             stage_params("t", self.subnet_t),
                             slope=LEAKY_SLOPE)
        raw, t = T.split_channels(both, self.subnet_s.c_out)
        s = T.scale(T.tanh(T.scale(raw, 1.0 / self.s_clamp)), self.s_clamp)
        return s, t


def coupling_forward(layer, x, bound=None):
    """y_a = x_a; y_b = x_b * exp(F_s(y_a)) + F_t(y_a)."""
    if x.shape[1] != layer.channels:
        raise DimensionError(f"{layer.name}: {x.shape[1]} channels, "
                             f"expected {layer.channels}")
    a, b = layer._halves(x)
    s, t = layer._scale_trans(a, bound)
    y_b = T.add(T.mul(b, T.exp(s)), t)
    return layer._join(a, y_b)


def coupling_reverse(layer, y, bound=None):
    """x_b = (y_b - F_t(y_a)) * exp(-F_s(y_a)): the exact algebraic inverse."""
    if y.shape[1] != layer.channels:
        raise DimensionError(f"{layer.name}: {y.shape[1]} channels, "
                             f"expected {layer.channels}")
    a, y_b = layer._halves(y)
    s, t = layer._scale_trans(a, bound)
    x_b = T.mul(T.sub(y_b, t), T.exp(T.neg(s)))
    return layer._join(a, x_b)
