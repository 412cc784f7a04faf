"""PSNR and SSIM over channel-first image tensors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from . import tensor as T
from .errors import DimensionError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    n_images: int


def _as_array(x):
    if isinstance(x, T.Tensor):
        return x.numpy()
    if isinstance(x, torch.Tensor):
        return x.detach().cpu().numpy()
    return np.asarray(x)


def psnr(a, b, peak=1.0):
    """10 log10(peak^2 / MSE), all channels pooled; inf when identical."""
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise DimensionError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size, sigma):
    half = (size - 1) / 2.0
    g = np.exp(-0.5 * ((np.arange(size) - half) / sigma) ** 2)
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b):
    """Mean structural similarity, 11x11 Gaussian window, dynamic range 1.

    Windows are valid-only (no padding).  Inputs must be rank-3 (c, h, w)
    or rank-4 (b, c, h, w) with spatial size at least the window.
    """
    a, b = _as_array(a), _as_array(b)
    if a.shape != b.shape:
        raise DimensionError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        a, b = a[None], b[None]
    if a.ndim != 4:
        raise DimensionError(f"ssim expects (b, c, h, w), got {a.shape}")
    if a.shape[2] < SSIM_WINDOW or a.shape[3] < SSIM_WINDOW:
        raise DimensionError(
            f"image {a.shape[2]}x{a.shape[3]} smaller than the "
            f"{SSIM_WINDOW}x{SSIM_WINDOW} window")
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    win = torch.from_numpy(_gaussian_window(SSIM_WINDOW, SSIM_SIGMA))
    channels = a.shape[1]
    kernel = win.expand(channels, 1, SSIM_WINDOW, SSIM_WINDOW).contiguous()
    ta = torch.from_numpy(np.ascontiguousarray(a, dtype=np.float64))
    tb = torch.from_numpy(np.ascontiguousarray(b, dtype=np.float64))

    def wmean(t):
        return F.conv2d(t, kernel, groups=channels)

    mu_a = wmean(ta)
    mu_b = wmean(tb)
    var_a = wmean(ta * ta) - mu_a * mu_a
    var_b = wmean(tb * tb) - mu_b * mu_b
    cov = wmean(ta * tb) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float((num / den).mean())


def evaluate_pair(produced, reference, peak=1.0):
    n = _as_array(produced).shape[0] if _as_array(produced).ndim == 4 else 1
    return MetricReport(psnr=psnr(produced, reference, peak=peak),
                        ssim=ssim(produced, reference),
                        n_images=n)
