import numpy as np
import pytest

from vesselsplat.gaussians import GaussianCloud
from vesselsplat.losses import (SSIM_C1, LossWeights, psnr, recon_loss, smooth_loss, ssim,
                                total_loss)

from conftest import make_cloud


def cloud_with_tables(tables):
    tables = np.atleast_2d(np.asarray(tables, dtype=np.float32))
    n, length = tables.shape
    base = make_cloud(n=n, table_len=length)
    base.offset_tables = tables
    return base


class TestReconLoss:
    def test_identical(self):
        img = np.random.default_rng(0).random((9, 9))
        val, grad = recon_loss(img, img)
        assert val == 0.0
        assert not grad.any()

    def test_uniform_half(self):
        val, _ = recon_loss(np.zeros((6, 7)), np.full((6, 7), 0.5))
        assert val == pytest.approx(0.5)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((12, 8)), rng.random((12, 8))
        val, grad = recon_loss(a, b)
        total = 0.0
        for i in range(12):
            for j in range(8):
                total += abs(a[i, j] - b[i, j])
        assert val == pytest.approx(total / 96, abs=1e-12)
        assert grad[3, 4] == pytest.approx(np.sign(a[3, 4] - b[3, 4]) / 96)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimensions"):
            recon_loss(np.zeros((4, 4)), np.zeros((4, 5)))


class TestSsim:
    def test_self_similarity_is_one(self):
        for seed in range(3):
            img = np.random.default_rng(seed).random((16, 16))
            val, _ = ssim(img, img)
            assert abs(val - 1.0) < 1e-9

    def test_symmetry(self):
        rng = np.random.default_rng(4)
        a, b = rng.random((20, 14)), rng.random((20, 14))
        assert ssim(a, b)[0] == pytest.approx(ssim(b, a)[0], abs=1e-9)

    def test_constant_images_closed_form(self):
        mu_a, mu_b = 0.3, 0.4
        a = np.full((16, 16), mu_a)
        b = np.full((16, 16), mu_b)
        val, _ = ssim(a, b)
        # zero variance: luminance term only (contrast term collapses to 1)
        expected = (2 * mu_a * mu_b + SSIM_C1) / (mu_a ** 2 + mu_b ** 2 + SSIM_C1)
        assert val == pytest.approx(expected, abs=1e-9)

    def test_range_and_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            val, _ = ssim(rng.random((13, 13)), rng.random((13, 13)))
            assert -1.0 <= val < 1.0  # 1 only for identical images

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(6)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        _, grad = ssim(a, b)
        eps = 1e-4  # large enough that the O(1) cancellation noise stays below tol
        worst = 0.0
        for i in range(0, 16, 3):
            for j in range(0, 16, 3):
                old = a[i, j]
                a[i, j] = old + eps
                fp, _ = ssim(a, b)
                a[i, j] = old - eps
                fm, _ = ssim(a, b)
                a[i, j] = old
                fd = (fp - fm) / (2 * eps)
                if abs(fd) < 1e-10 and abs(grad[i, j]) < 1e-10:
                    continue
                worst = max(worst, abs(grad[i, j] - fd) / max(abs(fd), abs(grad[i, j])))
        assert worst < 1e-4

    def test_window_too_large(self):
        with pytest.raises(ValueError, match="smaller than"):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))


class TestSmoothLoss:
    def test_constant_tables(self):
        val, grad = smooth_loss(cloud_with_tables(np.full((3, 5), 0.4)))
        assert val == 0.0 and not grad.any()

    def test_single_bump(self):
        val, _ = smooth_loss(cloud_with_tables([[0.0, 0.2, 0.4, 0.2, 0.0]]))
        assert val == pytest.approx(0.8, abs=1e-7)

    def test_two_gaussians_mean(self):
        val, _ = smooth_loss(cloud_with_tables([[0, 1, 0, 0, 0], [0, 0, 0, 0, 0]]))
        assert val == pytest.approx(1.0, abs=1e-7)

    def test_shift_invariance(self):
        rng = np.random.default_rng(7)
        tables = rng.normal(size=(4, 6)).astype(np.float32)
        v1, _ = smooth_loss(cloud_with_tables(tables))
        v2, _ = smooth_loss(cloud_with_tables(tables + 2.5))
        assert v1 == pytest.approx(v2, rel=1e-6)

    def test_length_one_table(self):
        val, grad = smooth_loss(cloud_with_tables(np.ones((2, 1))))
        assert val == 0.0 and grad.shape == (2, 1)

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(8)
        tables = rng.normal(size=(3, 5))
        cloud = cloud_with_tables(tables)
        cloud.offset_tables = tables.copy()  # f64 for clean fd
        _, grad = smooth_loss(cloud)
        eps = 1e-6
        for i in range(3):
            for k in range(5):
                old = cloud.offset_tables[i, k]
                cloud.offset_tables[i, k] = old + eps
                fp, _ = smooth_loss(cloud)
                cloud.offset_tables[i, k] = old - eps
                fm, _ = smooth_loss(cloud)
                cloud.offset_tables[i, k] = old
                assert grad[i, k] == pytest.approx((fp - fm) / (2 * eps), abs=1e-6)


class TestPsnr:
    def test_identical_capped(self):
        img = np.random.default_rng(9).random((8, 8))
        assert psnr(img, img) == 99.0

    def test_uniform_tenth(self):
        assert psnr(np.zeros((8, 8)), np.full((8, 8), 0.1)) == pytest.approx(20.0, abs=1e-9)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(10)
        a, b = rng.random((10, 10)), rng.random((10, 10))
        total = 0.0
        for i in range(10):
            for j in range(10):
                total += (a[i, j] - b[i, j]) ** 2
        assert psnr(a, b) == pytest.approx(10 * np.log10(100 / total), abs=1e-9)

    def test_never_exceeds_cap(self):
        a = np.zeros((8, 8))
        b = np.full((8, 8), 1.2e-5)  # mse ~ 1.4e-10, just above the branch point
        assert psnr(a, b) <= 99.0


class TestTotalLoss:
    def test_identical_zero_tables(self):
        img = np.random.default_rng(11).random((16, 16))
        cloud = cloud_with_tables(np.zeros((4, 5)))
        val, d_img, d_tab = total_loss(img, img, cloud, LossWeights())
        assert val == pytest.approx(0.0, abs=1e-12)
        assert not d_tab.any()

    def test_zero_weights_equal_recon_exactly(self):
        rng = np.random.default_rng(12)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        cloud = cloud_with_tables(rng.normal(size=(3, 5)))
        val, d_img, _ = total_loss(a, b, cloud, LossWeights(0.0, 0.0))
        rv, rg = recon_loss(a, b)
        assert val == rv
        assert np.array_equal(d_img, rg)

    def test_terms_sum(self):
        rng = np.random.default_rng(13)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        cloud = cloud_with_tables(rng.normal(size=(3, 5)))
        w = LossWeights(lambda_ssim=0.2, lambda_smooth=0.01)
        val, _, _ = total_loss(a, b, cloud, w)
        expected = (recon_loss(a, b)[0]
                    + 0.2 * (1.0 - ssim(a, b)[0])
                    + 0.01 * smooth_loss(cloud)[0])
        assert val == pytest.approx(expected, abs=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(14)
        for seed in range(5):
            a, b = rng.random((16, 16)), rng.random((16, 16))
            cloud = cloud_with_tables(rng.normal(size=(2, 5)))
            val, _, _ = total_loss(a, b, cloud, LossWeights())
            assert val >= 0.0

    def test_table_gradient_matches_fd(self):
        rng = np.random.default_rng(15)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        tables = rng.normal(size=(2, 5))
        cloud = cloud_with_tables(tables)
        cloud.offset_tables = tables.copy()
        w = LossWeights(lambda_ssim=0.1, lambda_smooth=0.0043)
        _, _, d_tab = total_loss(a, b, cloud, w)
        eps = 1e-6
        for i in range(2):
            for k in range(5):
                old = cloud.offset_tables[i, k]
                cloud.offset_tables[i, k] = old + eps
                fp, _, _ = total_loss(a, b, cloud, w)
                cloud.offset_tables[i, k] = old - eps
                fm, _, _ = total_loss(a, b, cloud, w)
                cloud.offset_tables[i, k] = old
                fd = (fp - fm) / (2 * eps)
                assert d_tab[i, k] == pytest.approx(fd, abs=1e-5)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            LossWeights(lambda_ssim=-0.1)
