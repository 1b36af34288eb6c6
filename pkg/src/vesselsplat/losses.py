"""Training losses (reconstruction, SSIM, temporal smoothness) and metrics.

All image losses are means over pixels so the loss weights are
resolution-independent.  SSIM uses the universal defaults: 11x11 Gaussian
window with sigma 1.5, K1 = 0.01, K2 = 0.03 on unit dynamic range, evaluated
on fully-covered (valid) windows only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .gaussians import GaussianCloud

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
PSNR_CAP = 99.0


@dataclass
class LossWeights:
    lambda_ssim: float = 0.1
    lambda_smooth: float = 0.0043

    def __post_init__(self):
        if self.lambda_ssim < 0 or self.lambda_smooth < 0:
            raise ValueError("loss weights must be non-negative")


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")
    return a, b


def recon_loss(rendered, target):
    """Mean absolute difference and its gradient w.r.t. the rendered image."""
    a, b = _check_pair(rendered, target)
    diff = a - b
    n = diff.size
    return float(np.abs(diff).sum() / n), np.sign(diff) / n


def _gauss_window(n=SSIM_WINDOW, sigma=SSIM_SIGMA):
    xs = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    w = np.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    return w / w.sum()


_WIN = _gauss_window()
_HALF = SSIM_WINDOW // 2


def _filt(x):
    """Separable Gaussian filtering restricted to fully-covered windows."""
    y = correlate1d(x, _WIN, axis=0, mode="constant")
    y = correlate1d(y, _WIN, axis=1, mode="constant")
    return y[_HALF:-_HALF, _HALF:-_HALF]


def _filt_adjoint(g, shape):
    """Adjoint of ``_filt``: scatter the valid-window map back to image size."""
    full = np.zeros(shape, dtype=np.float64)
    full[_HALF:-_HALF, _HALF:-_HALF] = g
    full = correlate1d(full, _WIN[::-1], axis=0, mode="constant")
    full = correlate1d(full, _WIN[::-1], axis=1, mode="constant")
    return full


def ssim(a, b):
    """Mean SSIM over valid windows and its gradient w.r.t. ``a``."""
    a, b = _check_pair(a, b)
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    mu_a = _filt(a)
    mu_b = _filt(b)
    raw_aa = _filt(a * a)
    raw_bb = _filt(b * b)
    raw_ab = _filt(a * b)
    var_a = raw_aa - mu_a * mu_a
    var_b = raw_bb - mu_b * mu_b
    cov = raw_ab - mu_a * mu_b

    a1 = 2.0 * mu_a * mu_b + SSIM_C1
    a2 = 2.0 * cov + SSIM_C2
    b1 = mu_a * mu_a + mu_b * mu_b + SSIM_C1
    b2 = var_a + var_b + SSIM_C2
    smap = (a1 * a2) / (b1 * b2)
    count = smap.size

    # partials of the per-window score w.r.t. (mu_a, raw_aa, raw_ab), where
    # var_a = raw_aa - mu_a^2 and cov = raw_ab - mu_a mu_b
    d_raw_aa = -smap / b2
    d_raw_ab = 2.0 * a1 / (b1 * b2)
    d_mu_a = (
        2.0 * mu_b * a2 / (b1 * b2)
        - 2.0 * mu_a * smap / b1
        + (-2.0 * mu_a) * d_raw_aa
        + (-mu_b) * d_raw_ab
    )
    grad = (
        _filt_adjoint(d_mu_a, a.shape)
        + 2.0 * a * _filt_adjoint(d_raw_aa, a.shape)
        + b * _filt_adjoint(d_raw_ab, a.shape)
    ) / count
    return float(smap.mean()), grad


def smooth_loss(cloud: GaussianCloud):
    """Mean over Gaussians of summed absolute adjacent offset-table differences.

    Returns the scalar and per-entry table gradients (subgradient 0 at ties).
    """
    tables = np.asarray(cloud.offset_tables, dtype=np.float64)
    n, length = tables.shape
    grad = np.zeros_like(tables)
    if length < 2 or n == 0:
        return 0.0, grad
    diffs = tables[:, 1:] - tables[:, :-1]
    value = float(np.abs(diffs).sum() / n)
    signs = np.sign(diffs) / n
    grad[:, 1:] += signs
    grad[:, :-1] -= signs
    return value, grad


def psnr(a, b):
    """Peak signal-to-noise ratio in dB on unit dynamic range, capped at 99."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def total_loss(rendered, target, cloud: GaussianCloud, weights: LossWeights):
    """Weighted sum of the three loss terms.

    Returns (scalar, gradient w.r.t. the rendered image, gradient w.r.t. the
    offset tables).  Zero-weight terms are skipped, so the scalar equals
    ``recon_loss`` exactly when both weights vanish.
    """
    value, d_image = recon_loss(rendered, target)
    d_tables = np.zeros_like(np.asarray(cloud.offset_tables, dtype=np.float64))
    if weights.lambda_ssim > 0:
        s, ds = ssim(rendered, target)
        value += weights.lambda_ssim * (1.0 - s)
        d_image = d_image - weights.lambda_ssim * ds
    if weights.lambda_smooth > 0:
        sv, sg = smooth_loss(cloud)
        value += weights.lambda_smooth * sv
        d_tables += weights.lambda_smooth * sg
    return value, d_image, d_tables
