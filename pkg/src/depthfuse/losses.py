"""Reference implementations of the training losses.

All functions are per-pixel and operate on numpy arrays; gradients are given
in closed form where the losses are used as optimisation targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import EmptyMask, NonPositiveDepth, ShapeMismatch

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass(frozen=True)
class PhotometricWeights:
    alpha: float = 0.85
    beta: float = 0.15

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("photometric weights must be non-negative")


def _same_shape(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def _box3(x: np.ndarray) -> np.ndarray:
    # 3x3 mean over the spatial axes only; reflect padding at the borders
    size = (3, 3) + (1,) * (x.ndim - 2)
    return uniform_filter(x, size=size, mode="reflect")


def ssim(img_a: np.ndarray, img_b: np.ndarray) -> np.ndarray:
    """Per-pixel SSIM with 3x3 box windows.

    Inputs are ``(H, W)`` or ``(H, W, C)`` in ``[0, 1]``; the output has the
    same shape as the inputs.
    """
    a, b = _same_shape(img_a, img_b)
    mu_a = _box3(a)
    mu_b = _box3(b)
    var_a = _box3(a * a) - mu_a**2
    var_b = _box3(b * b) - mu_b**2
    cov = _box3(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def photometric_loss(target, reconstructed, w: PhotometricWeights = PhotometricWeights()):
    """``alpha (1 - SSIM)/2 + beta |I - I'|`` per pixel, averaged over channels."""
    a, b = _same_shape(target, reconstructed)
    s = (1.0 - ssim(a, b)) / 2.0
    l1 = np.abs(a - b)
    loss = w.alpha * s + w.beta * l1
    if loss.ndim == 3:
        loss = loss.mean(axis=-1)
    # SSIM of identical windows is 1 up to rounding
    return np.maximum(loss, 0.0)


def _check_depths(d, d_pseudo, log_sigma):
    d = np.asarray(d, dtype=float)
    d_pseudo = np.asarray(d_pseudo, dtype=float)
    log_sigma = np.asarray(log_sigma, dtype=float)
    if d.shape != d_pseudo.shape or d.shape != log_sigma.shape:
        raise ShapeMismatch(f"shapes differ: {d.shape}, {d_pseudo.shape}, {log_sigma.shape}")
    if np.any(~(d > 0)) or np.any(~(d_pseudo > 0)):
        raise NonPositiveDepth("depths must be strictly positive")
    return d, d_pseudo, log_sigma


def distill_loss(d, d_pseudo, log_sigma):
    """Laplacian negative log-likelihood of ``log d`` around ``log d_pseudo``.

    ``|log d - log d_pseudo| / exp(log_sigma) + log_sigma`` per pixel.
    """
    d, d_pseudo, log_sigma = _check_depths(d, d_pseudo, log_sigma)
    r = np.abs(np.log(d) - np.log(d_pseudo))
    return r * np.exp(-log_sigma) + log_sigma


def distill_loss_grad(d, d_pseudo, log_sigma):
    """Element-wise gradients ``(dl/dd, dl/dlog_sigma)``.

    Uses the zero subgradient where ``d == d_pseudo``.
    """
    d, d_pseudo, log_sigma = _check_depths(d, d_pseudo, log_sigma)
    diff = np.log(d) - np.log(d_pseudo)
    inv_sigma = np.exp(-log_sigma)
    grad_d = np.sign(diff) * inv_sigma / d
    grad_s = 1.0 - np.abs(diff) * inv_sigma
    return grad_d, grad_s


def masked_mean(loss_map, mask=None) -> float:
    loss_map = np.asarray(loss_map, dtype=float)
    if mask is None:
        if loss_map.size == 0:
            raise EmptyMask("no pixels to average")
        return float(loss_map.mean())
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != loss_map.shape:
        raise ShapeMismatch(f"mask shape {mask.shape} != loss shape {loss_map.shape}")
    n = int(mask.sum())
    if n == 0:
        raise EmptyMask("mask excludes every pixel")
    return float(loss_map[mask].sum() / n)
