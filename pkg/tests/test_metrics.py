import numpy as np
import pytest
from skimage.metrics import structural_similarity

from vderain.metrics import PSNR_CAP_DB, psnr_luminance, ssim_luminance
from vderain.video import VideoClip, rgb_to_luminance


def _clip(seed, n=2, c=3, h=24, w=30):
    rng = np.random.default_rng(seed)
    return VideoClip(rng.random((n, c, h, w)).astype(np.float32))


def _skimage_ssim(a, b):
    """Independent route: per-frame skimage SSIM on BT.601 luminance."""
    la = rgb_to_luminance(a).data[:, 0].astype(np.float64)
    lb = rgb_to_luminance(b).data[:, 0].astype(np.float64)
    vals = [
        structural_similarity(
            la[i], lb[i], win_size=11, gaussian_weights=True, sigma=1.5,
            use_sample_covariance=False, data_range=1.0)
        for i in range(la.shape[0])
    ]
    return float(np.mean(vals))


class TestPsnr:
    def test_constant_offset_is_exactly_20db(self):
        a = VideoClip(np.zeros((2, 3, 16, 16), dtype=np.float32))
        b = VideoClip(np.full((2, 3, 16, 16), 0.1, dtype=np.float32))
        # MSE = 0.01 on unit range: 10*log10(1/0.01) = 20
        assert psnr_luminance(a, b) == pytest.approx(20.0, abs=1e-6)

    def test_identical_hits_cap(self):
        a = _clip(0)
        assert psnr_luminance(a, a) == PSNR_CAP_DB

    def test_matches_direct_formula(self):
        a, b = _clip(1), _clip(2)
        la = rgb_to_luminance(a).data.astype(np.float64)
        lb = rgb_to_luminance(b).data.astype(np.float64)
        want = 10.0 * np.log10(1.0 / np.mean((la - lb) ** 2))
        assert psnr_luminance(a, b) == pytest.approx(want, abs=1e-9)

    def test_symmetry(self):
        a, b = _clip(3), _clip(4)
        assert psnr_luminance(a, b) == pytest.approx(psnr_luminance(b, a))


class TestSsim:
    def test_self_similarity_is_one(self):
        a = _clip(5)
        assert ssim_luminance(a, a) == pytest.approx(1.0, abs=1e-9)

    def test_matches_skimage_random(self):
        a, b = _clip(6), _clip(7)
        assert ssim_luminance(a, b) == pytest.approx(_skimage_ssim(a, b), abs=1e-6)

    def test_matches_skimage_correlated(self):
        # correlated pair, closer to the metric's operating point
        rng = np.random.default_rng(8)
        base = rng.random((3, 3, 32, 32)).astype(np.float32)
        noisy = np.clip(base + 0.08 * rng.standard_normal(base.shape), 0, 1)
        a = VideoClip(base)
        b = VideoClip(noisy.astype(np.float32))
        assert ssim_luminance(a, b) == pytest.approx(_skimage_ssim(a, b), abs=1e-6)

    def test_matches_skimage_grayscale(self):
        a, b = _clip(9, c=1), _clip(10, c=1)
        assert ssim_luminance(a, b) == pytest.approx(_skimage_ssim(a, b), abs=1e-6)

    def test_degrades_with_noise(self):
        rng = np.random.default_rng(11)
        base = rng.random((2, 1, 32, 32)).astype(np.float32)
        a = VideoClip(base)
        small = VideoClip(np.clip(base + 0.02 * rng.standard_normal(base.shape), 0, 1).astype(np.float32))
        large = VideoClip(np.clip(base + 0.2 * rng.standard_normal(base.shape), 0, 1).astype(np.float32))
        assert ssim_luminance(a, small) > ssim_luminance(a, large)

    def test_frame_too_small_for_window(self):
        a = _clip(12, h=8, w=8)
        with pytest.raises(ValueError):
            ssim_luminance(a, a)


class TestShapeChecks:
    def test_psnr_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr_luminance(_clip(0, n=2), _clip(0, n=3))

    def test_ssim_shape_mismatch(self):
        with pytest.raises(ValueError):
            ssim_luminance(_clip(0, h=24), _clip(0, h=26))
