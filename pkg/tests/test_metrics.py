"""PSNR and SSIM behavior."""

import math

import numpy as np
import pytest

from wicnet.errors import DimensionError
from wicnet.metrics import MetricReport, evaluate_pair, psnr, ssim


class TestPsnr:
    def test_identical_is_infinite(self, rng):
        a = rng.uniform(size=(1, 3, 8, 8))
        assert psnr(a, a) == math.inf

    def test_uniform_tenth_error_is_twenty_db(self, rng):
        a = rng.uniform(0.0, 0.9, size=(1, 3, 8, 8))
        assert abs(psnr(a, a + 0.1) - 20.0) <= 1e-6

    def test_quarter_mse_closed_form(self):
        a = np.zeros((1, 3, 4, 4))
        b = np.full((1, 3, 4, 4), 0.5)
        assert abs(psnr(a, b) - 10.0 * math.log10(4.0)) <= 1e-12

    def test_strictly_decreases_with_noise(self, rng):
        a = rng.uniform(0.2, 0.8, size=(1, 3, 8, 8))
        noise = rng.standard_normal(a.shape)
        values = [psnr(a, a + amp * noise) for amp in (0.01, 0.02, 0.05, 0.1)]
        assert all(x > y for x, y in zip(values, values[1:]))

    def test_peak_parameter(self):
        a = np.zeros((1, 1, 2, 2))
        b = np.full((1, 1, 2, 2), 25.5)
        assert abs(psnr(a, b, peak=255.0) - 20.0) <= 1e-9

    def test_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            psnr(rng.uniform(size=(1, 3, 4, 4)), rng.uniform(size=(1, 3, 4, 5)))


class TestSsim:
    def test_identical_images_give_exactly_one(self, rng):
        a = rng.uniform(size=(3, 16, 16))
        assert ssim(a, a) == 1.0

    def test_symmetry(self, rng):
        a = rng.uniform(size=(3, 16, 16))
        b = np.clip(a + 0.05 * rng.standard_normal(a.shape), 0, 1)
        assert ssim(a, b) == ssim(b, a)

    def test_constant_offset_closed_form(self):
        mu, d = 0.4, 0.1
        a = np.full((1, 16, 16), mu)
        b = np.full((1, 16, 16), mu + d)
        c1 = 0.01 ** 2
        expected = (2.0 * mu * (mu + d) + c1) / (mu ** 2 + (mu + d) ** 2 + c1)
        assert abs(ssim(a, b) - expected) <= 1e-10

    def test_degrades_with_noise(self, rng):
        a = rng.uniform(0.2, 0.8, size=(3, 32, 32))
        noise = rng.standard_normal(a.shape)
        vals = [ssim(a, a + amp * noise) for amp in (0.01, 0.05, 0.2)]
        assert vals[0] > vals[1] > vals[2]

    def test_rejects_images_below_window(self, rng):
        with pytest.raises(DimensionError):
            ssim(rng.uniform(size=(3, 8, 8)), rng.uniform(size=(3, 8, 8)))

    def test_rank4_batches_accepted(self, rng):
        a = rng.uniform(size=(2, 3, 16, 16))
        assert ssim(a, a) == 1.0


def test_evaluate_pair_bundles_both(rng):
    a = rng.uniform(size=(1, 3, 16, 16))
    rep = evaluate_pair(a, a)
    assert isinstance(rep, MetricReport)
    assert rep.psnr == math.inf and rep.ssim == 1.0 and rep.n_images == 1
