"""CSV layout, figure rendering, and residual-map amplification."""

import csv
import math

import numpy as np
import pytest

from wicnet.corpus import load_png
from wicnet.errors import DimensionError
from wicnet.report import (CSV_COLUMNS, plot_eval_curves,
                           plot_per_image_metrics, plot_training_curves,
                           save_image, save_residual_map, write_metrics_csv)


def _rows(n):
    return [{"index": i, "forward_psnr": 30.0 + i, "forward_ssim": 0.9,
             "recovery_psnr": 28.0 + i, "recovery_ssim": 0.8}
            for i in range(n)]


class TestCsv:
    def test_columns_and_mean_row(self, tmp_path):
        p = tmp_path / "m.csv"
        write_metrics_csv(p, _rows(3), aggregate={
            "forward_psnr": 31.0, "forward_ssim": 0.9,
            "recovery_psnr": 29.0, "recovery_ssim": 0.8})
        with open(p, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == CSV_COLUMNS
        assert len(rows) == 5
        assert rows[-1][0] == "mean"
        assert float(rows[1][1]) == 30.0

    def test_without_aggregate(self, tmp_path):
        p = tmp_path / "m.csv"
        write_metrics_csv(p, _rows(2))
        with open(p, newline="") as fh:
            assert len(list(csv.reader(fh))) == 3


class TestResiduals:
    def test_identical_images_render_black(self, tmp_path, rng):
        img = rng.uniform(size=(3, 8, 8))
        p = tmp_path / "r.png"
        save_residual_map(p, img, img)
        assert np.all(load_png(p) == 0.0)

    def test_amplification_factor(self, tmp_path):
        a = np.zeros((3, 8, 8))
        b = np.full((3, 8, 8), 0.02)   # |a-b|*20 = 0.4
        p = tmp_path / "r.png"
        save_residual_map(p, a, b)
        img = load_png(p)
        assert abs(img[0, 0, 0] - 0.4) <= 1 / 255

    def test_clips_at_one(self, tmp_path):
        a = np.zeros((3, 4, 4))
        b = np.full((3, 4, 4), 0.5)    # amplified residual would be 10
        p = tmp_path / "r.png"
        save_residual_map(p, a, b)
        assert np.all(load_png(p) == 1.0)

    def test_shape_mismatch(self, tmp_path):
        with pytest.raises(DimensionError):
            save_residual_map(tmp_path / "r.png", np.zeros((3, 4, 4)),
                              np.zeros((3, 4, 5)))

    def test_single_channel_renders_gray(self, tmp_path):
        a = np.zeros((1, 4, 4))
        b = np.full((1, 4, 4), 0.01)
        p = tmp_path / "r.png"
        save_residual_map(p, a, b)
        img = load_png(p)
        assert img.shape == (3, 4, 4)
        assert np.all(img[0] == img[1])

    def test_save_image_batch_dim(self, tmp_path, rng):
        p = tmp_path / "i.png"
        save_image(p, rng.uniform(size=(1, 3, 4, 4)))
        assert load_png(p).shape == (3, 4, 4)


class TestFigures:
    def _log(self, n, with_eval=False):
        log = []
        for i in range(n):
            rec = {"step": i, "loss": 1.0 / (i + 1), "forward": 0.5,
                   "reverse": 0.1, "det": 0.01, "shift": 0.02, "lr": 1e-4}
            if with_eval and i % 2 == 1:
                rec.update(forward_psnr=30.0, forward_ssim=0.9,
                           recovery_psnr=25.0, recovery_ssim=0.8)
            log.append(rec)
        return log

    def test_training_curves_written(self, tmp_path):
        p = tmp_path / "loss.png"
        plot_training_curves(self._log(10), p)
        assert p.stat().st_size > 0

    def test_eval_curves_written_when_present(self, tmp_path):
        p = tmp_path / "eval.png"
        assert plot_eval_curves(self._log(10, with_eval=True), p) is True
        assert p.stat().st_size > 0

    def test_eval_curves_skip_without_data(self, tmp_path):
        p = tmp_path / "eval.png"
        assert plot_eval_curves(self._log(10), p) is False
        assert not p.exists()

    def test_eval_curves_handle_infinite_psnr(self, tmp_path):
        log = self._log(4, with_eval=True)
        log[1]["recovery_psnr"] = math.inf
        p = tmp_path / "eval.png"
        assert plot_eval_curves(log, p) is True

    def test_per_image_bars(self, tmp_path):
        p = tmp_path / "bars.png"
        plot_per_image_metrics(_rows(4), p)
        assert p.stat().st_size > 0
