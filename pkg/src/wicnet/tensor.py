"""Rank-4 tensors, structural ops, and a minimal reverse-mode tape.

Values are carried by CPU ``torch.Tensor`` objects (the kernel library for
the heavy convolution arithmetic); differentiation is a hand-written
Wengert-list tape over a closed op set.  Creation order on the tape is the
topological order, so the backward walk is a single reversed scan.

Tensors are immutable after creation.  Two dtypes are supported: f64 for
verification work and f32 for training speed.
"""

from __future__ import annotations

import numpy as np
import torch

from .errors import DegenerateShiftError, DimensionError, UsageError

DTYPES = {"f32": torch.float32, "f64": torch.float64}

# When enabled, every public op asserts its output is finite.  The training
# loop turns this off for speed and instead checks the per-step loss, the
# only node whose finiteness all others feed.
_CHECK_FINITE = True


def set_finite_checks(enabled):
    """Globally enable or disable per-op output finiteness checks."""
    global _CHECK_FINITE
    prev = _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)
    return prev


def _as_value(data, dtype=None):
    if isinstance(data, torch.Tensor):
        t = data
    elif isinstance(data, np.ndarray):
        t = torch.from_numpy(np.ascontiguousarray(data))
    else:
        t = torch.tensor(data, dtype=torch.float64)
    if dtype is not None:
        t = t.to(DTYPES[dtype] if isinstance(dtype, str) else dtype)
    if t.dtype not in (torch.float32, torch.float64):
        t = t.to(torch.float64)
    return t


class Tensor:
    """A value node: a torch array plus the tape that recorded it (if any)."""

    __slots__ = ("value", "tape", "name")

    def __init__(self, value, tape=None, name=None):
        self.value = value
        self.tape = tape
        self.name = name

    @property
    def shape(self):
        return tuple(self.value.shape)

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def ndim(self):
        return self.value.dim()

    def numpy(self):
        return self.value.detach().cpu().numpy()

    def item(self):
        return self.value.item()

    def __repr__(self):
        tag = "leaf" if self.tape and self in self.tape._leaves else "node"
        return f"Tensor(shape={self.shape}, dtype={self.value.dtype}, {tag})"


def constant(data, dtype=None):
    """Wrap raw data as an untracked constant tensor."""
    return Tensor(_as_value(data, dtype))


class _Record:
    __slots__ = ("inputs", "outputs", "vjp", "opname")

    def __init__(self, inputs, outputs, vjp, opname):
        self.inputs = inputs
        self.outputs = outputs
        self.vjp = vjp
        self.opname = opname


class Grads:
    """Gradient bundle returned by ``Tape.backward``."""

    def __init__(self, by_id, by_name):
        self._by_id = by_id
        self.by_name = by_name

    def of(self, tensor):
        """Gradient w.r.t. an arbitrary tracked tensor (None if unreached)."""
        return self._by_id.get(id(tensor))

    def __getitem__(self, name):
        return self.by_name[name]


class Tape:
    """Wengert list: records ops in creation order, replays them backward."""

    def __init__(self):
        self._records = []
        self._leaves = {}
        self.params = {}
        # scratch for ops that see the same leaves twice in one recording
        # (a net's forward and reverse passes share one parameter binding)
        self._op_cache = {}

    def leaf(self, data, name=None, dtype=None):
        """Register a leaf tensor; named leaves become parameters."""
        t = Tensor(_as_value(data, dtype), tape=self)
        self._leaves[t] = name
        if name is not None:
            if name in self.params:
                raise UsageError(f"duplicate parameter name {name!r}")
            self.params[name] = t
            t.name = name
        return t

    def _record(self, inputs, outputs, vjp, opname):
        self._records.append(_Record(inputs, outputs, vjp, opname))

    def release(self):
        """Drop every recorded op, leaf, and parameter registration.

        A used tape is one large reference cycle (tape -> record -> tensor
        -> tape), so without this only a full garbage-collector pass frees
        a step's activations; training loops call release() per step to
        return that memory immediately.
        """
        self._records.clear()
        self._leaves.clear()
        self.params.clear()
        self._op_cache.clear()

    def backward(self, loss):
        """Accumulate gradients of a scalar loss for every influencing node.

        Registered parameters that do not influence the loss receive exact
        zeros.  Raises UsageError if the loss is not a tracked scalar.
        """
        if not isinstance(loss, Tensor) or loss.tape is not self:
            raise UsageError("loss is not connected to this tape")
        if loss.value.numel() != 1:
            raise UsageError("backward requires a scalar loss")
        grads = {id(loss): torch.ones_like(loss.value)}
        for rec in reversed(self._records):
            gouts = tuple(grads.get(id(o)) for o in rec.outputs)
            if all(g is None for g in gouts):
                continue
            gins = rec.vjp(gouts)
            for inp, gi in zip(rec.inputs, gins):
                if inp is None or gi is None or inp.tape is not self:
                    continue
                acc = grads.get(id(inp))
                grads[id(inp)] = gi if acc is None else acc + gi
        by_name = {}
        for name, t in self.params.items():
            g = grads.get(id(t))
            by_name[name] = torch.zeros_like(t.value) if g is None else g
        return Grads(grads, by_name)

    def __len__(self):
        return len(self._records)


def _tape_of(*tensors):
    tape = None
    for t in tensors:
        if t is None:
            continue
        if t.tape is not None:
            if tape is not None and tape is not t.tape:
                raise UsageError("operands recorded on different tapes")
            tape = t.tape
    return tape


def _check_same_dtype(*tensors):
    dt = None
    for t in tensors:
        if t is None:
            continue
        if dt is None:
            dt = t.value.dtype
        elif t.value.dtype != dt:
            raise DimensionError(
                f"mixed dtypes {dt} vs {t.value.dtype}; cast explicitly")
    return dt


def _emit(tape, inputs, values, vjp, opname):
    if _CHECK_FINITE:
        for v in values:
            if not torch.isfinite(v).all():
                raise FloatingPointError(f"non-finite output from {opname}")
    outs = tuple(Tensor(v, tape=tape) for v in values)
    if tape is not None:
        tape._record(inputs, outs, vjp, opname)
    return outs if len(outs) > 1 else outs[0]


def _ensure_t4(x, opname):
    if x.ndim != 4:
        raise DimensionError(f"{opname} expects a rank-4 tensor, got {x.shape}")


# ---------------------------------------------------------------------------
# channel-mixing convolutions


def conv1x1(x, w):
    """Per-pixel channel mix: output channel k = row k of ``w`` dotted with
    the input channels (the 2-mode product of the kernel with the tensor).

    x: (b, n, h, w) tensor; w: (m, n) kernel matrix.
    """
    _ensure_t4(x, "conv1x1")
    if w.ndim != 2:
        raise DimensionError(f"conv1x1 kernel must be 2-D, got {w.shape}")
    b, n, hh, ww = x.shape
    m, n2 = w.shape
    if n2 != n:
        raise DimensionError(f"conv1x1: kernel has {n2} columns, input has {n} channels")
    _check_same_dtype(x, w)
    xf = x.value.reshape(b, n, hh * ww)
    y = torch.matmul(w.value, xf).reshape(b, m, hh, ww)

    def vjp(gouts):
        (g,) = gouts
        gf = g.reshape(b, m, hh * ww)
        gx = torch.matmul(w.value.transpose(0, 1), gf).reshape(b, n, hh, ww)
        gw = torch.einsum("bmp,bnp->mn", gf, xf)
        return gx, gw

    return _emit(_tape_of(x, w), (x, w), (y,), vjp, "conv1x1")


def conv3x3(x, w, bias=None):
    """3x3 convolution, stride 1, zero padding 1 (spatial size preserved).

    Equivalent to summing nine shifted conv1x1 terms; fused here for speed.
    x: (b, cin, h, w); w: (cout, cin, 3, 3); bias: (cout,) or None.
    """
    _ensure_t4(x, "conv3x3")
    if w.ndim != 4 or w.shape[2:] != (3, 3):
        raise DimensionError(f"conv3x3 weight must be (cout, cin, 3, 3), got {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(
            f"conv3x3: weight expects {w.shape[1]} input channels, got {x.shape[1]}")
    if bias is not None and bias.shape != (w.shape[0],):
        raise DimensionError(f"conv3x3 bias shape {bias.shape} != ({w.shape[0]},)")
    _check_same_dtype(x, w, bias)
    bval = None if bias is None else bias.value
    y = torch.nn.functional.conv2d(x.value, w.value, bval, padding=1)

    def vjp(gouts):
        (g,) = gouts
        gx, gw, gb = torch.ops.aten.convolution_backward(
            g, x.value, w.value, [w.shape[0]], [1, 1], [1, 1], [1, 1],
            False, [0, 0], 1, [True, True, bias is not None])
        if bias is None:
            return gx, gw
        return gx, gw, gb

    inputs = (x, w) if bias is None else (x, w, bias)
    return _emit(_tape_of(*inputs), inputs, (y,), vjp, "conv3x3")


def _grad_input_weight(w, groups):
    """Kernel that turns a forward conv into the gradient-w.r.t.-input conv."""
    if groups == 1:
        return w.transpose(0, 1).flip(2, 3).contiguous()
    co = w.shape[0] // groups
    return (w.view(groups, co, w.shape[1], 3, 3).permute(0, 2, 1, 3, 4)
            .reshape(groups * w.shape[1], co, 3, 3).flip(2, 3).contiguous())


def dense_stack(x, s_stages, t_stages=None, slope=0.2):
    """Densely connected stack of 3x3 conv stages, fused into one tape op.

    Each stage convolves the concatenation of the stack input and every
    previous stage's activation; all stages but the last pass through a
    LeakyReLU.  With ``t_stages`` a second stack of identical geometry runs
    on the same input as an independent group of one grouped convolution
    per stage, and the two outputs come back channel-concatenated.  This
    computes exactly what composing conv3x3 / leaky_relu / concat_channels
    would, an order of magnitude fewer tape records and, for f32, in the
    channels-last layout the convolution kernels prefer.

    x: (b, c_in, h, w); stages: sequence of (weight, bias) pairs with
    weight (c_out_i, c_in + sum of previous c_out, 3, 3).
    """
    _ensure_t4(x, "dense_stack")
    slope = float(slope)
    dual = t_stages is not None
    s_stages = tuple(s_stages)
    t_stages = tuple(t_stages) if dual else ()
    if len(s_stages) < 1:
        raise DimensionError("dense_stack needs at least one stage")
    if dual and len(t_stages) != len(s_stages):
        raise DimensionError("paired stacks must have the same stage count")
    flat = [x]
    cin = x.shape[1]
    for i, (w, b) in enumerate(s_stages):
        if w.ndim != 4 or w.shape[2:] != (3, 3) or w.shape[1] != cin:
            raise DimensionError(
                f"dense_stack stage {i + 1}: weight {w.shape} does not take "
                f"{cin} input channels")
        if b.shape != (w.shape[0],):
            raise DimensionError(
                f"dense_stack stage {i + 1}: bias {b.shape} != ({w.shape[0]},)")
        if dual:
            tw, tb = t_stages[i]
            if tw.shape != w.shape or tb.shape != b.shape:
                raise DimensionError(
                    f"dense_stack stage {i + 1}: paired stack shapes differ")
        cin += w.shape[0]
    for w, b in s_stages + t_stages:
        flat.extend((w, b))
    _check_same_dtype(*flat)

    groups = 2 if dual else 1
    n_stages = len(s_stages)
    use_cl = x.value.dtype == torch.float32
    fmt = {"memory_format": torch.channels_last} if use_cl else {}

    def lay(v):
        return v.contiguous(**fmt) if use_cl else v

    # weight prep (concatenation, layout, the flipped backward kernels) only
    # depends on the parameter leaves, which a forward/reverse pair on one
    # tape shares; cache it there keyed by identity of the leaf objects
    tape = _tape_of(*flat)
    wsrc = flat[1:]
    cache = None
    if tape is not None:
        hit = tape._op_cache.get(id(wsrc[0]))
        if hit is not None and len(hit["srcs"]) == len(wsrc) and \
                all(a is b for a, b in zip(hit["srcs"], wsrc)):
            cache = hit
        else:
            cache = {"srcs": list(wsrc), "combined": None, "giw": {}}
            tape._op_cache[id(wsrc[0])] = cache

    if cache is not None and cache["combined"] is not None:
        combined = cache["combined"]
    else:
        combined = []
        for i in range(n_stages):
            w = torch.cat([s_stages[i][0].value, t_stages[i][0].value]) \
                if dual else s_stages[i][0].value
            b = torch.cat([s_stages[i][1].value, t_stages[i][1].value]) \
                if dual else s_stages[i][1].value
            combined.append((lay(w), b))
        if cache is not None:
            cache["combined"] = combined

    xl = lay(x.value)
    feats_a, feats_b = [xl], [xl]
    cins, posts = [], []
    out = None
    for i, (w, b) in enumerate(combined):
        parts = feats_a + feats_b if dual else feats_a
        ci = lay(parts[0] if len(parts) == 1 else torch.cat(parts, 1))
        cins.append(ci)
        h = torch.nn.functional.conv2d(ci, w, b, padding=1, groups=groups)
        if i < n_stages - 1:
            h = torch.nn.functional.leaky_relu(h, slope)
            posts.append(h)
            if dual:
                g = w.shape[0] // 2
                feats_a.append(h[:, :g])
                feats_b.append(h[:, g:])
            else:
                feats_a.append(h)
        else:
            out = h.contiguous()

    def vjp(gouts):
        (g,) = gouts
        ones = torch.ones((), dtype=g.dtype)
        low = torch.full((), slope, dtype=g.dtype)
        n_im, _, hh, ww = x.shape
        csz = [x.shape[1]] + [st[0].shape[0] for st in s_stages]
        # one preallocated accumulator per feature; in the paired case the
        # two halves share a buffer so it can feed the grouped kernels
        # directly, with no concatenation on the way back down
        gfeat = [
            torch.empty((n_im, csz[j] * groups, hh, ww), dtype=g.dtype,
                        **fmt).zero_()
            for j in range(n_stages)
        ]

        def scatter(gci, i):
            # undo the stage-i input concatenation
            pieces = torch.split(gci, csz[:i + 1] * groups, dim=1)
            for j in range(i + 1):
                if dual:
                    gfeat[j].narrow(1, 0, csz[j]).add_(pieces[j])
                    gfeat[j].narrow(1, csz[j], csz[j]).add_(pieces[i + 1 + j])
                else:
                    gfeat[j].add_(pieces[j])

        giw = cache["giw"] if cache is not None else {}
        gws, gbs = [None] * n_stages, [None] * n_stages
        gout = lay(g)
        for i in range(n_stages - 1, -1, -1):
            if i < n_stages - 1:
                post = posts[i]
                # activation mask from the stage output sign (slope > 0);
                # in place is safe, nothing else reads the accumulator
                gout = gfeat[i + 1]
                gout *= torch.where(post >= 0, ones, low)
                gout = lay(gout)
            w = combined[i][0]
            _, gw, gb = torch.ops.aten.convolution_backward(
                gout, cins[i], w, [w.shape[0]], [1, 1], [1, 1], [1, 1],
                False, [0, 0], groups, [False, True, True])
            gws[i], gbs[i] = gw, gb
            wback = giw.get(i)
            if wback is None:
                wback = lay(_grad_input_weight(w, groups))
                giw[i] = wback
            gci = torch.nn.functional.conv2d(
                gout, wback, padding=1, groups=groups)
            scatter(gci, i)

        gx = gfeat[0][:, :csz[0]] + gfeat[0][:, csz[0]:] if dual else gfeat[0]
        grads = [gx.contiguous()]
        for i in range(n_stages):
            grads.append(gws[i][:gws[i].shape[0] // groups].contiguous())
            grads.append(gbs[i][:gbs[i].shape[0] // groups])
        if dual:
            for i in range(n_stages):
                grads.append(gws[i][gws[i].shape[0] // 2:].contiguous())
                grads.append(gbs[i][gbs[i].shape[0] // 2:])
        return tuple(grads)

    return _emit(tape, tuple(flat), (out,), vjp, "dense_stack")


# ---------------------------------------------------------------------------
# structural ops


def _validate_offsets(offsets, c, h, w):
    if len(offsets) == 0:
        raise DimensionError("shift requires at least one offset")
    for src, di, dj in offsets:
        if not (0 <= src < c):
            raise DimensionError(f"shift source channel {src} out of range [0, {c})")
        if (di, dj) == (0, 0):
            raise DegenerateShiftError("offset (0, 0) would reproduce the input verbatim")
        if abs(di) >= h or abs(dj) >= w:
            raise DegenerateShiftError(
                f"offset ({di}, {dj}) leaves no content for a {h}x{w} plane")


def _window(n, d):
    # destination slice and source slice along one axis for displacement d
    if d >= 0:
        return slice(0, n - d), slice(d, n)
    return slice(-d, n), slice(0, n + d)


def shift(x, offsets):
    """Translate channels spatially; vacated pixels are zero filled.

    Output channel k is input channel ``offsets[k][0]`` moved by
    (di, dj) = offsets[k][1:], where positive displacements pull content
    from higher indices (row i of the output is row i+di of the source).
    """
    _ensure_t4(x, "shift")
    b, c, hh, ww = x.shape
    offsets = [(int(s), int(di), int(dj)) for s, di, dj in offsets]
    _validate_offsets(offsets, c, hh, ww)
    y = torch.zeros((b, len(offsets), hh, ww), dtype=x.value.dtype)
    for k, (src, di, dj) in enumerate(offsets):
        dr, sr = _window(hh, di)
        dc, sc = _window(ww, dj)
        y[:, k, dr, dc] = x.value[:, src, sr, sc]

    def vjp(gouts):
        (g,) = gouts
        gx = torch.zeros_like(x.value)
        for k, (src, di, dj) in enumerate(offsets):
            dr, sr = _window(hh, di)
            dc, sc = _window(ww, dj)
            gx[:, src, sr, sc] += g[:, k, dr, dc]
        return (gx,)

    return _emit(_tape_of(x), (x,), (y,), vjp, "shift")


def pixel_unshuffle(x, s):
    """Space-to-channel rearrangement: (b, c, h, w) -> (b, c*s*s, h/s, w/s).

    Output channel index is c_in*s*s + i*s + j for block position (i, j),
    row-major within each s x s block.
    """
    _ensure_t4(x, "pixel_unshuffle")
    s = int(s)
    b, c, hh, ww = x.shape
    if s < 1 or hh % s or ww % s:
        raise DimensionError(f"pixel_unshuffle: {hh}x{ww} not divisible by s={s}")
    y = (x.value.reshape(b, c, hh // s, s, ww // s, s)
         .permute(0, 1, 3, 5, 2, 4).reshape(b, c * s * s, hh // s, ww // s)
         .contiguous())

    def vjp(gouts):
        (g,) = gouts
        gx = (g.reshape(b, c, s, s, hh // s, ww // s)
              .permute(0, 1, 4, 2, 5, 3).reshape(b, c, hh, ww).contiguous())
        return (gx,)

    return _emit(_tape_of(x), (x,), (y,), vjp, "pixel_unshuffle")


def pixel_shuffle(x, s):
    """Channel-to-space rearrangement, the exact inverse of pixel_unshuffle."""
    _ensure_t4(x, "pixel_shuffle")
    s = int(s)
    b, c, hh, ww = x.shape
    if s < 1 or c % (s * s):
        raise DimensionError(f"pixel_shuffle: {c} channels not divisible by s*s={s * s}")
    co = c // (s * s)
    y = (x.value.reshape(b, co, s, s, hh, ww)
         .permute(0, 1, 4, 2, 5, 3).reshape(b, co, hh * s, ww * s).contiguous())

    def vjp(gouts):
        (g,) = gouts
        gx = (g.reshape(b, co, hh, s, ww, s)
              .permute(0, 1, 3, 5, 2, 4).reshape(b, c, hh, ww).contiguous())
        return (gx,)

    return _emit(_tape_of(x), (x,), (y,), vjp, "pixel_shuffle")


def split_channels(x, at):
    """Split along the channel axis; concat of the parts restores x exactly."""
    _ensure_t4(x, "split_channels")
    b, c, hh, ww = x.shape
    at = int(at)
    if not 0 < at < c:
        raise DimensionError(f"split index {at} outside (0, {c})")
    ya = x.value[:, :at].contiguous()
    yb = x.value[:, at:].contiguous()

    def vjp(gouts):
        ga, gb = gouts
        if ga is None:
            ga = torch.zeros((b, at, hh, ww), dtype=x.value.dtype)
        if gb is None:
            gb = torch.zeros((b, c - at, hh, ww), dtype=x.value.dtype)
        return (torch.cat([ga, gb], dim=1),)

    return _emit(_tape_of(x), (x,), (ya, yb), vjp, "split_channels")


def concat_channels(parts):
    """Concatenate along the channel axis, order preserved."""
    parts = list(parts)
    if not parts:
        raise DimensionError("concat_channels requires at least one part")
    for p in parts:
        _ensure_t4(p, "concat_channels")
    base = parts[0].shape
    for p in parts[1:]:
        if p.shape[0] != base[0] or p.shape[2:] != base[2:]:
            raise DimensionError("concat_channels: mismatched batch/spatial dims")
    _check_same_dtype(*parts)
    sizes = [p.shape[1] for p in parts]
    y = torch.cat([p.value for p in parts], dim=1)

    def vjp(gouts):
        (g,) = gouts
        return tuple(torch.split(g, sizes, dim=1))

    return _emit(_tape_of(*parts), tuple(parts), (y,), vjp, "concat_channels")


# ---------------------------------------------------------------------------
# elementwise ops (identical shapes; no broadcasting)


def _binary(a, b, fwd, vjp_builder, opname):
    if a.shape != b.shape:
        raise DimensionError(f"{opname}: shapes {a.shape} vs {b.shape}")
    _check_same_dtype(a, b)
    y = fwd(a.value, b.value)
    return _emit(_tape_of(a, b), (a, b), (y,), vjp_builder(a, b, y), opname)


def add(a, b):
    return _binary(a, b, torch.add,
                   lambda a, b, y: lambda g: (g[0], g[0]), "add")


def sub(a, b):
    return _binary(a, b, torch.sub,
                   lambda a, b, y: lambda g: (g[0], -g[0]), "sub")


def mul(a, b):
    return _binary(a, b, torch.mul,
                   lambda a, b, y: lambda g: (g[0] * b.value, g[0] * a.value),
                   "mul")


def _unary(x, y, vjp, opname):
    return _emit(_tape_of(x), (x,), (y,), vjp, opname)


def neg(x):
    return _unary(x, -x.value, lambda g: (-g[0],), "neg")


def scale(x, c):
    """Multiply by a python scalar constant."""
    c = float(c)
    return _unary(x, x.value * c, lambda g: (g[0] * c,), "scale")


def exp(x):
    y = torch.exp(x.value)
    return _unary(x, y, lambda g: (g[0] * y,), "exp")


def tanh(x):
    y = torch.tanh(x.value)
    return _unary(x, y, lambda g: (g[0] * (1.0 - y * y),), "tanh")


def abs_(x):
    # subgradient 0 at the kink
    return _unary(x, torch.abs(x.value),
                  lambda g: (g[0] * torch.sign(x.value),), "abs")


def leaky_relu(x, slope=0.2):
    # subgradient 1 at the origin, matching the x >= 0 branch
    slope = float(slope)
    y = torch.nn.functional.leaky_relu(x.value, slope)
    xv = x.value

    def vjp(g):
        return (g[0] * torch.where(xv >= 0,
                                   torch.ones((), dtype=xv.dtype),
                                   torch.full((), slope, dtype=xv.dtype)),)

    return _unary(x, y, vjp, "leaky_relu")


def sqrt(x):
    y = torch.sqrt(x.value)

    def vjp(g):
        return (g[0] / (2.0 * y),)

    return _unary(x, y, vjp, "sqrt")


# ---------------------------------------------------------------------------
# reductions


def sum_all(x):
    """Sum of all entries, as a scalar tensor."""
    y = x.value.sum()
    return _unary(x, y, lambda g: (g[0].expand(x.shape).clone() if x.ndim else g[0],),
                  "sum_all")


def mean_all(x):
    """Mean of all entries, as a scalar tensor."""
    n = x.value.numel()
    y = x.value.mean()
    return _unary(x, y,
                  lambda g: ((g[0] / n).expand(x.shape).clone() if x.ndim else g[0],),
                  "mean_all")


def record_op(inputs, values, vjp, opname):
    """Record a custom op (used by the matrix ops that need factorizations).

    inputs: tuple of Tensors (or None placeholders); values: tuple of raw
    torch values; vjp: callable mapping output cotangents to input
    cotangents, aligned with ``inputs``.
    """
    return _emit(_tape_of(*[i for i in inputs if i is not None]),
                 inputs, values, vjp, opname)
