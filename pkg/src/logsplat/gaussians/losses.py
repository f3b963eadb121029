"""Image comparison terms used for lifting and evaluation.

All functions take float images in [0, 1] with matching shapes and compute
in float64. PSNR saturates at 100 dB below an MSE of 1e-10; SSIM uses an
11x11 Gaussian window (sigma 1.5) with the standard stabilizers
C1 = 0.01^2, C2 = 0.03^2 and a data range of 1.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import ShapeMismatch

PSNR_CAP_DB = 100.0
PSNR_MSE_FLOOR = 1e-10
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def l1_loss(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    err = mse(a, b)
    if err < PSNR_MSE_FLOOR:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / err))


def ssim(a: np.ndarray, b: np.ndarray, win_size: int = 11, sigma: float = 1.5) -> float:
    """Mean structural similarity over the window-valid interior.

    Window means/variances use a truncated Gaussian; the score map is
    cropped by the window radius before averaging, and channels (if any)
    are averaged with equal weight. Identical inputs score exactly 1.
    """
    a, b = _pair(a, b)
    if win_size % 2 != 1 or win_size < 3:
        raise ValueError(f"win_size must be odd and >= 3, got {win_size}")
    if min(a.shape[0], a.shape[1]) < win_size:
        raise ValueError(f"images smaller than the {win_size}x{win_size} window")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]

    pad = win_size // 2
    truncate = (pad - 0.5) / sigma  # gaussian_filter radius == pad

    def win_mean(x):
        return np.stack(
            [gaussian_filter(x[:, :, ch], sigma, truncate=truncate) for ch in range(x.shape[2])],
            axis=2,
        )

    ua = win_mean(a)
    ub = win_mean(b)
    uaa = win_mean(a * a)
    ubb = win_mean(b * b)
    uab = win_mean(a * b)
    va = uaa - ua * ua
    vb = ubb - ub * ub
    vab = uab - ua * ub

    s = ((2.0 * ua * ub + SSIM_C1) * (2.0 * vab + SSIM_C2)) / (
        (ua * ua + ub * ub + SSIM_C1) * (va + vb + SSIM_C2)
    )
    interior = s[pad:-pad, pad:-pad, :]
    return float(np.mean([interior[:, :, ch].mean() for ch in range(interior.shape[2])]))


def recon_loss(
    rendered: np.ndarray,
    target: np.ndarray,
    l1_weight: float = 0.8,
    ssim_weight: float = 0.2,
) -> float:
    """Weighted photometric objective: l1 plus structural dissimilarity."""
    return l1_weight * l1_loss(rendered, target) + ssim_weight * (1.0 - ssim(rendered, target))
