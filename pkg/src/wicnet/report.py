"""Run artifacts: delimited metrics, loss-curve figures, residual maps.

Everything renders to files (the Agg backend is forced), so reports work
in headless runs and can be diffed or archived next to the raw logs.
"""

import csv
import json

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np

from .corpus import save_png
from .errors import DimensionError

CSV_COLUMNS = ["index", "forward_psnr", "forward_ssim",
               "recovery_psnr", "recovery_ssim"]
RESIDUAL_GAIN = 20.0


def write_metrics_csv(path, rows, aggregate=None):
    """Per-image rows plus an optional trailing 'mean' row, fixed columns."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in CSV_COLUMNS})
        if aggregate is not None:
            w.writerow({"index": "mean",
                        **{k: aggregate[k] for k in CSV_COLUMNS[1:]}})


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _displayable(img):
    """(c, h, w) or (1, c, h, w) to a (3, h, w) float image in [0, 1]."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 4:
        if a.shape[0] != 1:
            raise DimensionError("can only render single-sample tensors")
        a = a[0]
    if a.ndim != 3:
        raise DimensionError(f"expected a (c, h, w) image, got {a.shape}")
    if a.shape[0] == 1:
        a = np.repeat(a, 3, axis=0)
    elif a.shape[0] != 3:
        raise DimensionError(f"cannot render {a.shape[0]} channels")
    return np.clip(a, 0.0, 1.0)


def save_image(path, img):
    save_png(path, _displayable(img))


def save_residual_map(path, a, b, gain=RESIDUAL_GAIN):
    """|a - b| amplified so near-identical images show their structure."""
    a4 = np.asarray(a, dtype=np.float64)
    b4 = np.asarray(b, dtype=np.float64)
    if a4.shape != b4.shape:
        raise DimensionError(f"residual needs equal shapes, "
                             f"got {a4.shape} vs {b4.shape}")
    save_png(path, _displayable(np.abs(a4 - b4) * gain))


def plot_training_curves(log, path):
    """Loss components (log scale) and learning rate over steps."""
    steps = [r["step"] for r in log]
    fig, axes = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    for key in ("loss", "forward", "reverse", "det", "shift"):
        series = [max(r[key], 1e-12) for r in log]
        axes[0].plot(steps, series, label=key, linewidth=1.0)
    axes[0].set_yscale("log")
    axes[0].set_ylabel("loss")
    axes[0].legend(loc="upper right", fontsize=8)
    axes[1].plot(steps, [r["lr"] for r in log], color="tab:gray")
    axes[1].set_ylabel("learning rate")
    axes[1].set_xlabel("step")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _finite(v, cap=99.0):
    # identical image pairs give an infinite PSNR; cap for plotting only
    return min(float(v), cap)


def plot_eval_curves(log, path):
    """Periodic PSNR measurements over training, if any were logged."""
    pts = [(r["step"], _finite(r["forward_psnr"]), _finite(r["recovery_psnr"]))
           for r in log if "recovery_psnr" in r]
    if not pts:
        return False
    steps, fwd, rec = zip(*pts)
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(steps, fwd, marker="o", markersize=3, label="embedding PSNR")
    ax.plot(steps, rec, marker="s", markersize=3, label="recovery PSNR")
    ax.set_xlabel("step")
    ax.set_ylabel("dB")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return True


def plot_per_image_metrics(rows, path):
    """Per-image forward/recovery PSNR bars for one evaluation sweep."""
    idx = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(8, 4))
    width = 0.4
    ax.bar(idx - width / 2, [_finite(r["forward_psnr"]) for r in rows], width,
           label="embedding")
    ax.bar(idx + width / 2, [_finite(r["recovery_psnr"]) for r in rows], width,
           label="recovery")
    ax.set_xlabel("image")
    ax.set_ylabel("PSNR (dB)")
    ax.set_xticks(idx)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
