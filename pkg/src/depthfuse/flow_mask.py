"""Dynamic-object masking from optical flow and known relative pose.

A static point must land on the epipolar line of its source pixel; flow that
moves a pixel far off that line indicates independent motion.
"""

from __future__ import annotations

import numpy as np

from .geometry import pixel_grid

DEFAULT_THRESHOLD_PX = 10.0


def epipolar_deviation(flow: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Distance in pixels between ``p + flow(p)`` and the epipolar line ``F p``.

    Pixels whose line is degenerate (the epipole itself) get ``+inf``.
    """
    flow = np.asarray(flow, dtype=float)
    if flow.ndim != 3 or flow.shape[-1] != 2:
        raise ValueError(f"flow must be (H, W, 2), got {flow.shape}")
    H, W = flow.shape[:2]
    p = pixel_grid(H, W)
    L = p @ np.asarray(F, dtype=float)[:, :2].T + np.asarray(F, dtype=float)[:, 2]
    q = p + flow
    norm2 = L[..., 0] ** 2 + L[..., 1] ** 2
    num = np.abs(L[..., 0] * q[..., 0] + L[..., 1] * q[..., 1] + L[..., 2])
    degenerate = norm2 < 1e-20
    with np.errstate(divide="ignore", invalid="ignore"):
        dev = num / np.sqrt(norm2)
    dev[degenerate] = np.inf
    return dev


def build_static_mask(deviation: np.ndarray, threshold: float = DEFAULT_THRESHOLD_PX) -> np.ndarray:
    """``True`` where the deviation is within ``threshold`` pixels (inclusive)."""
    if not threshold > 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    return np.asarray(deviation, dtype=float) <= threshold


def mask_to_png_array(mask: np.ndarray) -> np.ndarray:
    """8-bit image: 255 static, 0 dynamic."""
    return np.where(mask, 255, 0).astype(np.uint8)
