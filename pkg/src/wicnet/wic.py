"""Well-posed invertible 1x1 convolution (WIC) layer.

A 1x1 convolution with kernel w in R^{m x n} is only invertible as a linear
system when it is overdetermined with full column rank.  For the
dimension-reducing case (m < n) the kernel is augmented with extra rows
ŵ_{m+1..M}; the forward pass uses only the first m rows, while the extra
rows are trained (shift loss) to reproduce spatially shifted copies of the
output.  The reverse pass then solves the overdetermined augmented system
with an ordinary normal-equation left inverse instead of sampling missing
information at random.

Two loss hooks live here: the log-determinant penalty on the Gram matrix
(keeps the augmented system full rank) and the shift-consistency loss.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import torch

from . import linalg
from . import tensor as T
from .errors import DimensionError, UsageError, WellPosednessError

log = logging.getLogger(__name__)

# value returned by the det loss when the Gram matrix is numerically
# singular: a large constant with zero gradient (the event is logged)
DET_BARRIER = 1.0e6

# count of barrier events since import, for tests and run summaries
BARRIER_EVENTS = 0


def offset_schedule(m, M):
    """Deterministic shift schedule for augmented rows.

    Augmented row k (0-based) sources output channel k mod m and shifts it
    by (d, d) with d = k // m + 1, so no two augmented rows share a
    (source, offset) pair and no offset is (0, 0).
    """
    if M < m:
        raise DimensionError(f"augmented row count M={M} below m={m}")
    return [(k % m, k // m + 1, k // m + 1) for k in range(M - m)]


class WicLayer:
    """Kernel matrix (possibly augmented), case tag, and shift schedule."""

    def __init__(self, kernel, m, offsets=None, pad_policy="zero",
                 name="wic", det_signed=False, shift_detached=False):
        kernel = T._as_value(kernel)
        if kernel.dim() != 2:
            raise DimensionError(f"kernel must be 2-D, got {tuple(kernel.shape)}")
        M, n = kernel.shape
        if not 1 <= m <= M:
            raise DimensionError(f"live row count m={m} outside [1, {M}]")
        if M > m and M < n:
            raise WellPosednessError(
                f"augmented kernel must have M >= n rows (got M={M}, n={n})")
        if pad_policy != "zero":
            raise UsageError(f"unknown pad policy {pad_policy!r}")
        self.kernel = kernel
        self.m = m
        self.n = n
        self.M = M
        self.case = "over" if m >= n else "under"
        self.augmented = M > m
        if self.augmented:
            self.offsets = list(offsets) if offsets is not None else offset_schedule(m, M)
            if len(self.offsets) != M - m:
                raise DimensionError(
                    f"{M - m} augmented rows need {M - m} offsets, got {len(self.offsets)}")
        else:
            self.offsets = []
        self.pad_policy = pad_policy
        self.name = name
        self.det_signed = det_signed
        self.shift_detached = shift_detached

    def params(self):
        return {"kernel": self.kernel}

    def set_param(self, key, value):
        if key != "kernel":
            raise KeyError(key)
        self.kernel = value

    def to_dtype(self, dtype):
        self.kernel = self.kernel.to(T.DTYPES[dtype])
        return self


def wic_init(n_in, n_out, M=None, seed=0, dtype="f64", name="wic", **flags):
    """Build a WIC layer with orthonormal columns (Gram = I, det loss 0).

    Over case (n_out >= n_in): plain kernel, M = n_out.  Under case
    (n_out < n_in): augmented kernel with M rows (default M = n_in, the
    smallest fully-determined augmentation).
    """
    if n_out < 1 or n_in < 1:
        raise DimensionError("channel counts must be positive")
    m = n_out
    if m >= n_in:
        if M is not None and M != m:
            raise WellPosednessError(
                f"over case uses a plain kernel: M must equal n_out={m}, got {M}")
        M = m
    else:
        if M is None:
            M = n_in
        if M < n_in:
            raise WellPosednessError(
                f"under case needs M >= n_in (Gram would be singular): "
                f"M={M} < n_in={n_in}")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((M, n_in))
    q, r = np.linalg.qr(a)
    # fix QR sign ambiguity so init is canonical
    q = q * np.where(np.diag(r) >= 0, 1.0, -1.0)
    layer = WicLayer(q.astype(np.float64), m, name=name, **flags)
    return layer.to_dtype(dtype)


def _kernel_tensor(layer, kernel):
    if kernel is not None:
        return kernel
    return T.Tensor(layer.kernel)


def wic_forward(layer, x, kernel=None):
    """y = (first m kernel rows) applied per pixel; augmented rows unused.

    When the kernel is a tracked leaf the full kernel is convolved and the
    live rows split off (the augmented response is needed by the shift loss
    anyway); the untracked path slices the kernel first so inference cost is
    independent of M.
    """
    k = _kernel_tensor(layer, kernel)
    if x.shape[1] != layer.n:
        raise DimensionError(f"{layer.name}: input has {x.shape[1]} channels, "
                             f"kernel expects {layer.n}")
    if not layer.augmented:
        return T.conv1x1(x, k)
    if k.tape is None and x.tape is None:
        return T.conv1x1(x, T.Tensor(k.value[:layer.m].contiguous()))
    full = T.conv1x1(x, k)
    y, _aug = T.split_channels(full, layer.m)
    return y


def _left_inverse_value(kernel_value):
    k64 = kernel_value.detach().cpu().numpy().astype(np.float64)
    p64 = linalg.left_inverse(k64)
    return k64, p64


def left_inverse_op(kernel):
    """Tracked left inverse P = (w^T w)^{-1} w^T of a kernel tensor.

    The cotangent rule, with G = w^T w and incoming cotangent Gp = dL/dP:
    dL/dw = (I - w P) Gp^T G^{-1} - P^T Gp P^T  (reduces to the classic
    inverse rule -w^{-T} Gp w^{-T} in the square case).
    """
    k64, p64 = _left_inverse_value(kernel.value)
    ginv64 = linalg.inv_gram(linalg.gram(k64))
    p = torch.from_numpy(p64).to(kernel.value.dtype)

    def vjp(gouts):
        (g,) = gouts
        gp = g.detach().cpu().numpy().astype(np.float64)
        eye = np.eye(k64.shape[0])
        gw = (eye - k64 @ p64) @ gp.T @ ginv64 - p64.T @ gp @ p64.T
        return (torch.from_numpy(gw).to(kernel.value.dtype),)

    return T.record_op((kernel,), (p,), vjp, "left_inverse")


def log_abs_det_gram(kernel):
    """Tracked log|det(w^T w)| with d/dw = 2 w (w^T w)^{-1} = 2 P^T.

    A numerically singular Gram matrix yields the constant barrier value
    with zero gradient; the event is logged and counted.
    """
    k64 = kernel.value.detach().cpu().numpy().astype(np.float64)
    sign, ld = linalg.log_abs_det(linalg.gram(k64))
    if sign == 0:
        global BARRIER_EVENTS
        BARRIER_EVENTS += 1
        log.warning("singular Gram matrix: det loss pinned at barrier %g", DET_BARRIER)
        value = torch.tensor(DET_BARRIER, dtype=kernel.value.dtype)

        def vjp_barrier(gouts):
            return (torch.zeros_like(kernel.value),)

        return T.record_op((kernel,), (value,), vjp_barrier, "log_abs_det_gram")
    p64 = linalg.left_inverse(k64)
    value = torch.tensor(ld, dtype=kernel.value.dtype)

    def vjp(gouts):
        (g,) = gouts
        gw = 2.0 * float(g) * p64.T
        return (torch.from_numpy(gw).to(kernel.value.dtype),)

    return T.record_op((kernel,), (value,), vjp, "log_abs_det_gram")


def wic_reverse(layer, y, kernel=None):
    """Reconstruct the input through the left inverse of the kernel.

    Plain (over) case: x = P applied to y.  Augmented case: y is first
    extended with its shifted copies so the augmented rows have a target,
    then the full left inverse is applied.
    """
    k = _kernel_tensor(layer, kernel)
    if y.shape[1] != layer.m:
        raise DimensionError(f"{layer.name}: reverse input has {y.shape[1]} "
                             f"channels, expected {layer.m}")
    if k.tape is not None:
        p = left_inverse_op(k)
    else:
        _, p64 = _left_inverse_value(k.value)
        p = T.Tensor(torch.from_numpy(p64).to(k.value.dtype))
    if not layer.augmented:
        return T.conv1x1(y, p)
    y_ext = T.concat_channels([y, T.shift(y, layer.offsets)])
    return T.conv1x1(y_ext, p)


def wic_det_loss(layer, kernel=None):
    """Well-posedness penalty on the Gram determinant.

    Default is |log det(w^T w)|, zero exactly at orthonormal columns and
    growing for both collapse and blow-up; the raw signed value is
    available via the layer's det_signed flag.
    """
    k = _kernel_tensor(layer, kernel)
    ld = log_abs_det_gram(k)
    if layer.det_signed:
        return ld
    return T.abs_(ld)


def wic_shift_loss(layer, x, y, kernel=None):
    """Mean-absolute mismatch between the augmented-row response and the
    shifted output, computed with the layer's padding policy.

    Differentiates through both the augmented rows and (by default) the
    shift target y; layer.shift_detached freezes the target.
    """
    if not layer.augmented:
        raise UsageError(f"{layer.name}: shift loss needs augmented rows (M > m)")
    k = _kernel_tensor(layer, kernel)
    full = T.conv1x1(x, k)
    _, aug = T.split_channels(full, layer.m)
    if layer.shift_detached:
        y = T.Tensor(y.value)
    target = T.shift(y, layer.offsets)
    return T.mean_all(T.abs_(T.sub(aug, target)))
