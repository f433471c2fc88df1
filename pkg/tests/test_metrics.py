import math

import numpy as np
import pytest

from irsr.errors import DimensionError, ImageError
from irsr.geometry import ALL_TRANSFORMS, apply_transform
from irsr.image import Image
from irsr.metrics import (
    PSNR_CAP_DB,
    SsimParams,
    evaluate_pair,
    psnr,
    score,
    ssim,
)

from conftest import random_image


class TestPsnr:
    def test_identical_images_are_infinite(self, rng):
        img = random_image(rng, 8, 8)
        assert psnr(img, img) == math.inf

    def test_uniform_error_one_255th(self):
        ref = Image(np.full((16, 16, 1), 0.3))
        test = Image(np.full((16, 16, 1), 0.3 + 1.0 / 255.0))
        expected = 20.0 * math.log10(255.0)
        assert psnr(ref, test) == pytest.approx(expected, abs=1e-9)

    def test_checkerboard_vs_black(self):
        board = np.indices((8, 8)).sum(axis=0) % 2
        ref = Image(board.astype(float))
        test = Image(np.zeros((8, 8)))
        assert psnr(ref, test) == pytest.approx(10.0 * math.log10(2.0), abs=1e-9)

    def test_symmetric(self, rng):
        a, b = random_image(rng, 9, 9), random_image(rng, 9, 9)
        assert psnr(a, b) == psnr(b, a)

    def test_dim_mismatch(self, rng):
        with pytest.raises(DimensionError):
            psnr(random_image(rng, 8, 8), random_image(rng, 8, 9))


class TestSsim:
    def test_self_similarity_is_exactly_one(self, rng):
        img = random_image(rng, 16, 20)
        assert ssim(img, img) == 1.0

    def test_constant_images_closed_form(self):
        # Variance terms cancel; value is (2*mu_x*mu_y+C1)/(mu_x^2+mu_y^2+C1).
        x = Image(np.full((16, 16, 1), 0.5))
        y = Image(np.full((16, 16, 1), 0.25))
        expected = (2 * 0.5 * 0.25 + 1e-4) / (0.5**2 + 0.25**2 + 1e-4)
        got = ssim(x, y)
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(0.800064, abs=1e-6)

    def test_black_vs_black_is_one(self):
        x = Image(np.zeros((12, 12, 1)))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-15)

    def test_window_normalized_and_symmetric(self):
        w = SsimParams().window()
        assert abs(w.sum() - 1.0) < 1e-12
        assert np.array_equal(w, w[::-1])
        grid = np.outer(w, w)
        assert np.array_equal(grid, grid.T)
        assert np.array_equal(grid, grid[::-1, ::-1])

    def test_symmetric_in_arguments(self, rng):
        a, b = random_image(rng, 14, 14), random_image(rng, 14, 14)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)

    def test_bounded_and_one_only_for_identical(self, rng):
        a = random_image(rng, 16, 16)
        b = Image(np.clip(a.data + rng.normal(0, 0.05, a.shape), 0, 1))
        val = ssim(a, b)
        assert -1.0 < val < 1.0

    def test_rejects_multichannel(self, rng):
        with pytest.raises(ImageError):
            ssim(random_image(rng, 16, 16, 3), random_image(rng, 16, 16, 3))

    def test_rejects_smaller_than_window(self, rng):
        with pytest.raises(DimensionError):
            ssim(random_image(rng, 10, 16), random_image(rng, 10, 16))


class TestJointD4Invariance:
    def test_both_metrics_invariant(self, rng):
        a = random_image(rng, 15, 21)
        b = Image(np.clip(a.data + rng.normal(0, 0.03, a.shape), 0, 1))
        p0, s0 = psnr(a, b), ssim(a, b)
        for t in ALL_TRANSFORMS:
            ta, tb = apply_transform(a, t), apply_transform(b, t)
            assert abs(psnr(ta, tb) - p0) < 1e-12, t
            assert abs(ssim(ta, tb) - s0) < 1e-12, t


class TestMonotonicity:
    def test_noise_amplitude_decreases_quality(self, rng):
        ref = Image(rng.uniform(0.3, 0.7, (24, 24, 1)))
        amps = [0.02, 0.05, 0.1, 0.15]
        psnrs = []
        ssim_means = []
        for amp in amps:
            values, ssims = [], []
            for seed in range(20):
                noise = np.random.default_rng(seed).normal(0, 1, ref.shape)
                noisy = Image(np.clip(ref.data + amp * noise, 0, 1))
                values.append(psnr(ref, noisy))
                ssims.append(ssim(ref, noisy))
            psnrs.append(np.mean(values))
            ssim_means.append(np.mean(ssims))
        assert all(x > y for x, y in zip(psnrs, psnrs[1:]))
        assert all(x > y for x, y in zip(ssim_means, ssim_means[1:]))


class TestScore:
    def test_formula(self):
        assert score(0.0, 0.0) == 0.0
        assert score(37.1588, 0.9270) == pytest.approx(55.6988, abs=1e-10)
        assert score(37.8274, 0.9321) == pytest.approx(56.4694, abs=1e-10)

    def test_linearity(self):
        for p, s in [(37.0, 0.9), (48.1, 0.5), (0.0, 1.0)]:
            assert score(p, s) - score(p, 0.0) == pytest.approx(20.0 * s, abs=1e-12)


class TestEvaluatePair:
    def test_perfect_reconstruction_capped(self, rng):
        gt = random_image(rng, 34, 46)
        from irsr.image import modcrop
        sr = modcrop(gt, 4)
        record = evaluate_pair(gt, sr, scale=4, shave_border=4, name="perfect")
        assert record.psnr_capped
        assert record.psnr_db == PSNR_CAP_DB
        assert record.ssim == 1.0
        assert record.score == 120.0

    def test_border_corruption_removed_by_shave(self, rng):
        from irsr.image import modcrop, shave
        gt = random_image(rng, 40, 48)
        clean = modcrop(gt, 4)
        corrupted = np.array(clean.data)
        corrupted[:4, :] = 0.0
        corrupted[-4:, :] = 0.0
        corrupted[:, :4] = 0.0
        corrupted[:, -4:] = 0.0
        sr = Image(corrupted)

        shaved = evaluate_pair(gt, sr, scale=4, shave_border=4)
        unshaved = evaluate_pair(gt, sr, scale=4, shave_border=0)
        assert shaved.psnr_capped and shaved.score == 120.0
        assert not unshaved.psnr_capped
        assert unshaved.score < shaved.score

        # Shaved metrics equal the clean pair's metrics.
        clean_rec = evaluate_pair(gt, clean, scale=4, shave_border=4)
        assert shaved.psnr_db == clean_rec.psnr_db
        assert shaved.ssim == clean_rec.ssim

    def test_dim_contract_violation(self, rng):
        gt = random_image(rng, 40, 48)
        sr = random_image(rng, 20, 24)
        with pytest.raises(DimensionError) as info:
            evaluate_pair(gt, sr, scale=4, shave_border=4)
        assert "40x48" in str(info.value) and "20x24" in str(info.value)

    def test_luminance_reduction_applied(self, rng):
        gt = random_image(rng, 32, 32, 3)
        sr = random_image(rng, 32, 32, 3)
        record = evaluate_pair(gt, sr, scale=4, shave_border=4, name="rgb")
        assert math.isfinite(record.score)

    def test_score_consistency_invariant(self, rng):
        gt = random_image(rng, 32, 32)
        sr = random_image(rng, 32, 32)
        r = evaluate_pair(gt, sr, scale=4, shave_border=4)
        assert r.score == r.psnr_db + 20.0 * r.ssim
