"""Depth-augmented SLIC superpixels.

Pixels are clustered on colour (CIELAB), image position and metric depth with
the un-squared weighted cost

    lambda_lab * ||lab_a - lab_b|| + lambda_d * |d_a - d_b| + lambda_pix * ||xy_a - xy_b||

using alternating assignment / mean-update steps seeded from a regular grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import math

import numpy as np
from numba import njit
from skimage import color

from .errors import ImageTooSmall, ShapeMismatch


@dataclass(frozen=True)
class SlicParams:
    step: int = 16
    lambda_lab: float = 0.1
    lambda_d: float = 0.2
    lambda_pix: float | None = None  # None -> 1 / step
    max_iter: int = 10
    exhaustive: bool = False

    def __post_init__(self):
        if int(self.step) != self.step or self.step < 2:
            raise ValueError(f"step must be an integer >= 2, got {self.step}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        w = (self.lambda_lab, self.lambda_d, self.pix_weight)
        if min(w) < 0 or max(w) == 0:
            raise ValueError(f"weights must be non-negative and not all zero, got {w}")

    @property
    def pix_weight(self) -> float:
        return 1.0 / self.step if self.lambda_pix is None else float(self.lambda_pix)


@dataclass(frozen=True)
class PixelFeature:
    lab: np.ndarray
    xy: np.ndarray
    depth: float


@dataclass
class SegmentLabels:
    """Result of :func:`segment`.

    ``labels`` holds compact cluster ids ``0..K-1``. ``center_*`` are the
    member means after the final update; ``search_labels`` is the final
    assignment in uncompacted ids and ``search_*`` the centres it was made
    against. ``objective`` has one entry per assignment
    (cost against the centres searched) followed by the cost after the final
    update.
    """

    labels: np.ndarray
    center_lab: np.ndarray
    center_xy: np.ndarray
    center_depth: np.ndarray
    counts: np.ndarray
    search_labels: np.ndarray = field(repr=False)
    search_lab: np.ndarray = field(repr=False)
    search_xy: np.ndarray = field(repr=False)
    search_depth: np.ndarray = field(repr=False)
    objective: list[float] = field(default_factory=list)

    @property
    def n_segments(self) -> int:
        return len(self.counts)


def rgb_to_lab(image: np.ndarray) -> np.ndarray:
    """RGB in ``[0, 1]`` to CIELAB (D65)."""
    return color.rgb2lab(np.asarray(image, dtype=float), illuminant="D65")


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    return color.lab2rgb(np.asarray(lab, dtype=float), illuminant="D65")


def slic_distance(a: PixelFeature, b: PixelFeature, p: SlicParams) -> float:
    return float(
        _cost(
            np.asarray(a.lab, float), np.asarray(a.xy, float), float(a.depth),
            np.asarray(b.lab, float), np.asarray(b.xy, float), float(b.depth), p,
        )
    )


def _cost(lab, xy, d, c_lab, c_xy, c_d, p: SlicParams):
    dl = lab - c_lab
    dxy = xy - c_xy
    lab_n = np.sqrt(dl[..., 0] ** 2 + dl[..., 1] ** 2 + dl[..., 2] ** 2)
    pix_n = np.sqrt(dxy[..., 0] ** 2 + dxy[..., 1] ** 2)
    return p.lambda_lab * lab_n + p.lambda_d * np.abs(d - c_d) + p.pix_weight * pix_n


def grid_centers(height: int, width: int, step: int) -> np.ndarray:
    """``(K, 2)`` initial ``(u, v)`` centres, row-major, one per grid cell."""
    ny = max(1, height // step)
    nx = max(1, width // step)
    ys = (np.arange(ny) + 0.5) * height / ny - 0.5
    xs = (np.arange(nx) + 0.5) * width / nx - 0.5
    vv, uu = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([uu.ravel(), vv.ravel()], axis=-1)


def _features(lab, depth):
    H, W = depth.shape
    v, u = np.mgrid[0:H, 0:W].astype(float)
    xy = np.stack([u, v], axis=-1)
    return (
        np.ascontiguousarray(lab.reshape(-1, 3)),
        np.ascontiguousarray(xy.reshape(-1, 2)),
        np.ascontiguousarray(depth.reshape(-1)),
    )


@njit(cache=True)
def _pixel_cost(lab, uv, depth, i, c_lab, c_xy, c_d, k, wl, wd, wp):
    a = lab[i, 0] - c_lab[k, 0]
    b = lab[i, 1] - c_lab[k, 1]
    c = lab[i, 2] - c_lab[k, 2]
    x = uv[i, 0] - c_xy[k, 0]
    y = uv[i, 1] - c_xy[k, 1]
    lab_n = math.sqrt(a * a + b * b + c * c)
    pix_n = math.sqrt(x * x + y * y)
    return wl * lab_n + wd * abs(depth[i] - c_d[k]) + wp * pix_n


@njit(cache=True)
def _search_all(lab, uv, depth, pixels, c_lab, c_xy, c_d, wl, wd, wp, labels, cost):
    for j in range(pixels.shape[0]):
        i = pixels[j]
        best = np.inf
        arg = -1
        for k in range(c_d.shape[0]):
            dk = _pixel_cost(lab, uv, depth, i, c_lab, c_xy, c_d, k, wl, wd, wp)
            if dk < best:  # strict: ties keep the lowest centre id
                best = dk
                arg = k
        labels[i] = arg
        cost[i] = best


@njit(cache=True)
def _search_windows(lab, uv, depth, height, width, c_lab, c_xy, c_d, r, wl, wd, wp, labels, cost):
    for k in range(c_d.shape[0]):
        u0 = max(0, int(math.ceil(c_xy[k, 0] - r)))
        u1 = min(width, int(math.floor(c_xy[k, 0] + r)) + 1)
        v0 = max(0, int(math.ceil(c_xy[k, 1] - r)))
        v1 = min(height, int(math.floor(c_xy[k, 1] + r)) + 1)
        for v in range(v0, v1):
            for u in range(u0, u1):
                i = v * width + u
                dk = _pixel_cost(lab, uv, depth, i, c_lab, c_xy, c_d, k, wl, wd, wp)
                if dk < cost[i]:
                    cost[i] = dk
                    labels[i] = k


def assign(lab_img, depth, c_lab, c_xy, c_d, p: SlicParams):
    """Label every pixel with its cheapest centre; returns ``(labels, cost)`` flat.

    The default search only visits centres within ``2 * step`` of a pixel and
    falls back to a full search where that window cannot be shown to contain
    the optimum, so both modes return identical labels.
    """
    H, W = depth.shape
    f_lab, f_xy, f_d = _features(lab_img, depth)
    c_lab = np.ascontiguousarray(c_lab, dtype=float)
    c_xy = np.ascontiguousarray(c_xy, dtype=float)
    c_d = np.ascontiguousarray(c_d, dtype=float)
    weights = (float(p.lambda_lab), float(p.lambda_d), float(p.pix_weight))
    n = H * W
    labels = np.full(n, -1, dtype=np.int64)
    cost = np.full(n, np.inf)
    if p.exhaustive:
        todo = np.arange(n, dtype=np.int64)
    else:
        r = 2.0 * p.step
        _search_windows(f_lab, f_xy, f_d, H, W, c_lab, c_xy, c_d, r, *weights, labels, cost)
        # A centre outside a pixel's window is more than r away and so costs
        # more than pix_weight * r; only pixels that do not beat that bound
        # can have their optimum outside the window.
        todo = np.flatnonzero(~(cost <= p.pix_weight * r))
    if len(todo):
        _search_all(f_lab, f_xy, f_d, todo, c_lab, c_xy, c_d, *weights, labels, cost)
    return labels, cost


def _update(labels, f_lab, f_xy, f_d, k):
    counts = np.bincount(labels, minlength=k).astype(float)
    keep = counts > 0
    remap = np.cumsum(keep) - 1
    labels = remap[labels]
    counts = counts[keep]
    kk = len(counts)

    def mean(x):
        return np.bincount(labels, weights=x, minlength=kk) / counts

    c_lab = np.stack([mean(f_lab[:, i]) for i in range(3)], axis=-1)
    c_xy = np.stack([mean(f_xy[:, i]) for i in range(2)], axis=-1)
    c_d = mean(f_d)
    return labels, c_lab, c_xy, c_d, counts.astype(np.int64)


def segment(lab: np.ndarray, depth: np.ndarray, p: SlicParams = SlicParams()) -> SegmentLabels:
    """Cluster an image into superpixels using colour, position and depth."""
    lab = np.asarray(lab, dtype=float)
    depth = np.asarray(depth, dtype=float)
    if lab.shape[:2] != depth.shape or lab.ndim != 3 or lab.shape[2] != 3:
        raise ShapeMismatch(f"LAB image {lab.shape} does not match depth {depth.shape}")
    H, W = depth.shape
    if p.step > min(H, W):
        raise ImageTooSmall(f"step {p.step} exceeds image size {H}x{W}")

    c_xy = grid_centers(H, W, p.step)
    iu = np.clip(np.rint(c_xy[:, 0]).astype(int), 0, W - 1)
    iv = np.clip(np.rint(c_xy[:, 1]).astype(int), 0, H - 1)
    c_lab = lab[iv, iu].copy()
    c_d = depth[iv, iu].copy()

    f_lab, f_xy, f_d = _features(lab, depth)
    objective = []
    for _ in range(p.max_iter):
        raw, cost = assign(lab, depth, c_lab, c_xy, c_d, p)
        objective.append(float(cost.sum()))
        search = (raw, c_lab, c_xy, c_d)
        labels, c_lab, c_xy, c_d, counts = _update(raw, f_lab, f_xy, f_d, len(c_d))

    final_cost = _cost(f_lab, f_xy, f_d, c_lab[labels], c_xy[labels], c_d[labels], p)
    objective.append(float(final_cost.sum()))
    return SegmentLabels(
        labels=labels.reshape(H, W).astype(np.int32),
        center_lab=c_lab,
        center_xy=c_xy,
        center_depth=c_d,
        counts=counts,
        search_labels=search[0].reshape(H, W),
        search_lab=search[1],
        search_xy=search[2],
        search_depth=search[3],
        objective=objective,
    )
