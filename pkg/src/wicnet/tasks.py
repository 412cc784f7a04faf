"""Task adapters: turn images into (input, target) pairs for training.

Images are channel-first float64 arrays (3, h, w) with values in [0, 1] on
the 8-bit grid.  Three conversions are supported: hiding several images
inside one, rescaling (the input is the lossless pixel-unshuffle of the
high-res image, the target its bicubic downscale), and decolorization
(target is the Lab lightness plane).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, DimensionError


@dataclass
class TaskSpec:
    kind: str                  # hide | rescale | decolor
    t: int = 2                 # images per hiding sample (1 cover + t-1 secrets)
    s: int = 2                 # rescale factor
    squeeze: int = 0           # optional spatial squeeze for hiding (0 = off)

    def __post_init__(self):
        if self.kind not in ("hide", "rescale", "decolor"):
            raise ConfigError(f"unknown task {self.kind!r}", key="task.kind")
        if self.kind == "hide" and self.t < 2:
            raise ConfigError("hiding needs t >= 2 images", key="task.t")
        if self.kind == "rescale" and self.s not in (2, 4):
            raise ConfigError(f"rescale factor must be 2 or 4, got {self.s}",
                              key="task.s")
        if self.squeeze and self.kind != "hide":
            raise ConfigError("squeeze applies to the hiding task only",
                              key="task.squeeze")

    @property
    def images_per_sample(self):
        return self.t if self.kind == "hide" else 1

    def channels(self):
        """(c_i, c_o) seen by the network."""
        if self.kind == "hide":
            f = self.squeeze * self.squeeze if self.squeeze else 1
            return 3 * self.t * f, 3 * f
        if self.kind == "rescale":
            return 3 * self.s * self.s, 3
        return 3, 1


def _check_image(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise DimensionError(f"expected a (3, h, w) image, got {img.shape}")
    return img


def pack_hiding(cover, secrets, squeeze=0):
    """x = [cover | secrets] channel stack; the target is the cover itself."""
    cover = _check_image(cover)
    secrets = [_check_image(s) for s in secrets]
    if not secrets:
        raise DimensionError("hiding needs at least one secret image")
    for s in secrets:
        if s.shape != cover.shape:
            raise DimensionError(f"secret shape {s.shape} != cover {cover.shape}")
    x = T.constant(np.concatenate([cover] + secrets, axis=0)[None])
    y = T.constant(cover[None].copy())
    if squeeze:
        x = T.pixel_unshuffle(x, squeeze)
        y = T.pixel_unshuffle(y, squeeze)
    return x, y


def pack_rescale(hr, s):
    """x losslessly rearranges hr; the target is its bicubic downscale."""
    hr = _check_image(hr)
    x = T.pixel_unshuffle(T.constant(hr[None]), s)
    y = T.constant(bicubic_downscale(hr, s)[None])
    return x, y


def pack_decolor(rgb):
    rgb = _check_image(rgb)
    x = T.constant(rgb[None].copy())
    y = T.constant(rgb_to_lab_l(rgb)[None, None])
    return x, y


def pack_sample(spec, images):
    """Dispatch on the task kind; images is one corpus slice per sample."""
    if spec.kind == "hide":
        return pack_hiding(images[0], images[1:spec.t], squeeze=spec.squeeze)
    if spec.kind == "rescale":
        return pack_rescale(images[0], spec.s)
    return pack_decolor(images[0])


# ---------------------------------------------------------------------------
# bicubic resampling

_A = -0.5


def _cubic(x):
    x = np.abs(x)
    out = np.zeros_like(x)
    near = x <= 1.0
    out[near] = ((_A + 2.0) * x[near] - (_A + 3.0)) * x[near] ** 2 + 1.0
    far = (x > 1.0) & (x < 2.0)
    xf = x[far]
    out[far] = ((_A * xf - 5.0 * _A) * xf + 8.0 * _A) * xf - 4.0 * _A
    return out


def resample_matrix(n, s):
    """(n/s, n) bicubic row-resampling matrix, antialiased, edge-clamped.

    The kernel is widened by the scale factor (support 4s taps) and each
    row is renormalized so constants are preserved exactly.
    """
    if n % s != 0:
        raise DimensionError(f"length {n} not divisible by scale {s}")
    n_out = n // s
    mat = np.zeros((n_out, n))
    for i in range(n_out):
        center = (i + 0.5) * s - 0.5
        lo = int(np.floor(center)) - 2 * s + 1
        taps = np.arange(lo, lo + 4 * s)
        weights = _cubic((taps - center) / s) / s
        taps = np.clip(taps, 0, n - 1)
        for j, w in zip(taps, weights):
            mat[i, j] += w
        mat[i] /= mat[i].sum()
    return mat


def bicubic_downscale(img, s):
    img = np.asarray(img, dtype=np.float64)
    if s == 1:
        return img.copy()
    if img.ndim == 2:
        return bicubic_downscale(img[None], s)[0]
    rows = resample_matrix(img.shape[1], s)
    cols = resample_matrix(img.shape[2], s)
    return np.einsum("oi,cij,pj->cop", rows, img, cols)


# ---------------------------------------------------------------------------
# Lab lightness

# sRGB luminance row of the RGB -> XYZ (D65) matrix
_LUMA = np.array([0.2126729, 0.7151522, 0.0721750])
_DELTA = 6.0 / 29.0


def rgb_to_lab_l(rgb):
    """CIE L* of an sRGB image, scaled to [0, 1]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    linear = np.where(rgb <= 0.04045, rgb / 12.92,
                      ((rgb + 0.055) / 1.055) ** 2.4)
    y = np.einsum("c,chw->hw", _LUMA, linear)
    f = np.where(y > _DELTA ** 3, np.cbrt(y),
                 y / (3.0 * _DELTA ** 2) + 4.0 / 29.0)
    return (116.0 * f - 16.0) / 100.0


def quantize8(arr):
    """Snap to the 8-bit grid in [0, 1] (what a stored PNG would hold)."""
    if isinstance(arr, T.Tensor):
        arr = arr.numpy()
    return np.round(np.clip(arr, 0.0, 1.0) * 255.0) / 255.0
