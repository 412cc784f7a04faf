"""Deterministic synthetic image corpus and PNG round-tripping.

Each image mixes a few oriented cosine waves with soft radial blobs, per
channel, then normalizes into [0.03, 0.97] and snaps to the 8-bit grid.
Index i of a corpus is fully determined by (seed, i) so iteration order and
parallel generation cannot change the data.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .errors import ConfigError, DimensionError


def synth_image(seed, size):
    """One (3, size, size) image in [0, 1] on the 8-bit grid."""
    rng = np.random.default_rng(seed)
    coords = (np.arange(size) + 0.5) / size
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    img = np.zeros((3, size, size))
    for ch in range(3):
        for _ in range(int(rng.integers(2, 5))):
            fx, fy = rng.uniform(0.5, 4.0, size=2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.uniform(0.3, 1.0)
            img[ch] += amp * np.cos(2.0 * np.pi * (fx * xx + fy * yy) + phase)
    for _ in range(int(rng.integers(1, 4))):
        cy, cx = rng.uniform(0.15, 0.85, size=2)
        radius = rng.uniform(0.08, 0.3)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * radius ** 2))
        img += rng.uniform(-1.0, 1.0, size=(3, 1, 1)) * blob
    lo, hi = img.min(), img.max()
    img = (img - lo) / (hi - lo) if hi > lo else np.full_like(img, 0.5)
    img = 0.03 + 0.94 * img
    return np.round(img * 255.0) / 255.0


def make_corpus(n_images, size, seed=0):
    """List of n deterministic images; image i depends only on (seed, i)."""
    children = np.random.SeedSequence(seed).spawn(n_images)
    return [synth_image(children[i], size) for i in range(n_images)]


def save_png(path, img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise DimensionError(f"expected (3, h, w), got {img.shape}")
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data.transpose(1, 2, 0), mode="RGB").save(path)


def load_png(path):
    with Image.open(path) as im:
        data = np.asarray(im.convert("RGB"), dtype=np.float64)
    return data.transpose(2, 0, 1) / 255.0


def load_corpus(directory):
    """All PNGs under a directory, sorted by name for a stable order."""
    names = sorted(p for p in os.listdir(directory)
                   if p.lower().endswith(".png"))
    if not names:
        raise ConfigError(f"no .png files in {directory!r}", key="corpus")
    return [load_png(os.path.join(directory, p)) for p in names]


def write_corpus(directory, n_images, size, seed=0):
    """Synthesize and store a corpus; returns the file paths."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i, img in enumerate(make_corpus(n_images, size, seed=seed)):
        p = os.path.join(directory, f"img_{i:04d}.png")
        save_png(p, img)
        paths.append(p)
    return paths
