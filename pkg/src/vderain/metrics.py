"""Luminance-domain restoration quality metrics."""

import numpy as np
from scipy.signal import convolve2d

from .video import rgb_to_luminance

PSNR_CAP_DB = 100.0

_SSIM_WIN = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2


def _as_luma64(clip):
    return rgb_to_luminance(clip).data[:, 0].astype(np.float64)


def psnr_luminance(restored, reference):
    """PSNR in dB between the luminance of two equally shaped clips.

    Unit peak signal; identical inputs hit the 100 dB cap instead of inf.
    """
    if restored.shape != reference.shape:
        raise ValueError(f"shape mismatch {restored.shape} vs {reference.shape}")
    a = _as_luma64(restored)
    b = _as_luma64(reference)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB))


def _gaussian_window(size=_SSIM_WIN, sigma=_SSIM_SIGMA):
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim_luminance(restored, reference):
    """Mean SSIM over frames, on luminance, 11x11 Gaussian window sigma 1.5.

    Window statistics use the weighted (population) form and only the
    fully valid interior of each frame enters the average.
    """
    if restored.shape != reference.shape:
        raise ValueError(f"shape mismatch {restored.shape} vs {reference.shape}")
    if restored.height < _SSIM_WIN or restored.width < _SSIM_WIN:
        raise ValueError(f"frames must be at least {_SSIM_WIN} pixels on a side")
    a = _as_luma64(restored)
    b = _as_luma64(reference)
    win = _gaussian_window()
    scores = [_ssim_frame(a[t], b[t], win) for t in range(a.shape[0])]
    return float(np.mean(scores))


def _ssim_frame(x, y, win):
    mx = convolve2d(x, win, mode="valid")
    my = convolve2d(y, win, mode="valid")
    mxx = convolve2d(x * x, win, mode="valid")
    myy = convolve2d(y * y, win, mode="valid")
    mxy = convolve2d(x * y, win, mode="valid")
    vx = mxx - mx * mx
    vy = myy - my * my
    cxy = mxy - mx * my
    num = (2.0 * mx * my + _SSIM_C1) * (2.0 * cxy + _SSIM_C2)
    den = (mx * mx + my * my + _SSIM_C1) * (vx + vy + _SSIM_C2)
    return float(np.mean(num / den))
