"""Fusion of dense network depth with sparse visual-odometry depth.

Everything happens in log-depth ``lg = ln(depth)``. The image is split into
superpixels; each segment gets

* an inner estimate: the least-squares log-scale aligning its network depth
  to the VO points inside it, giving a target mean log-depth ``lg_tar``;
* an outer estimate: the per-segment mean log-depths ``lg`` minimising

      sum_k  lambda1_k (lg_tar_k - lg_k)^2 + lambda2 (lg_k - lg0_k)^2
    + lambda0 sum_{k<j} ((lg_k - lg_j) - (lg0_k - lg0_j))^2

  whose stationarity conditions form a linear system with a diagonal plus
  rank-one matrix.

The per-segment shift ``lg_k - lg0_k`` is then added to every pixel of the
segment, i.e. each segment's depth is rescaled by one factor.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .depth_codec import DEFAULT_D_MAX, DEFAULT_D_MIN
from .errors import (
    NoVoPoints,
    NonPositiveDepth,
    OutOfBounds,
    ShapeMismatch,
    SingularSystem,
    TooLarge,
)
from .slic3d import SegmentLabels, SlicParams, rgb_to_lab, segment

PIXELWISE_MAX_PIXELS = 256


@dataclass(frozen=True)
class FusionWeights:
    lambda0: float = 0.001  # inter-segment consistency
    lambda1: float = 1.0  # VO target
    lambda2: float = 0.1  # network prior

    def __post_init__(self):
        if min(self.lambda0, self.lambda1, self.lambda2) < 0:
            raise ValueError(f"fusion weights must be non-negative: {self}")


@dataclass
class SparseDepthMap:
    """Sparse ``(u, v, depth)`` observations for one frame (integer pixels)."""

    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.int64).reshape(-1)
        self.v = np.asarray(self.v, dtype=np.int64).reshape(-1)
        self.depth = np.asarray(self.depth, dtype=float).reshape(-1)
        if not (len(self.u) == len(self.v) == len(self.depth)):
            raise ShapeMismatch("u, v and depth must have equal length")
        if np.any(~(self.depth > 0)) or not np.all(np.isfinite(self.depth)):
            raise NonPositiveDepth("VO depths must be finite and positive")

    @classmethod
    def empty(cls) -> "SparseDepthMap":
        return cls(np.zeros(0), np.zeros(0), np.zeros(0))

    @classmethod
    def from_points(cls, points) -> "SparseDepthMap":
        """Build from ``(u, v, depth)`` triples; repeated pixels keep the nearest depth."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            return cls.empty()
        u = np.rint(pts[:, 0]).astype(np.int64)
        v = np.rint(pts[:, 1]).astype(np.int64)
        d = pts[:, 2]
        order = np.lexsort((d, u, v))
        u, v, d = u[order], v[order], d[order]
        first = np.ones(len(u), dtype=bool)
        first[1:] = (u[1:] != u[:-1]) | (v[1:] != v[:-1])
        return cls(u[first], v[first], d[first])

    def __len__(self) -> int:
        return len(self.depth)

    def check_bounds(self, height: int, width: int) -> None:
        bad = (self.u < 0) | (self.u >= width) | (self.v < 0) | (self.v >= height)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise OutOfBounds(
                f"VO point ({self.u[i]}, {self.v[i]}, {self.depth[i]}) outside {width}x{height} image"
            )

    def scaled(self, factor: float) -> "SparseDepthMap":
        return SparseDepthMap(self.u, self.v, self.depth * factor)


@dataclass
class SegmentSummary:
    """Per-segment quantities, one array entry per segment id.

    ``lg_tar`` is NaN where a segment has no VO points.
    """

    lg0: np.ndarray
    lg_tar: np.ndarray
    vo_count: np.ndarray

    @property
    def has_vo(self) -> np.ndarray:
        return self.vo_count > 0

    def __len__(self) -> int:
        return len(self.lg0)


def inner_scale(lg_net_at_vo, lg_vo) -> float:
    """Least-squares log-scale ``log v`` aligning network log-depths to VO log-depths."""
    a = np.asarray(lg_net_at_vo, dtype=float).reshape(-1)
    b = np.asarray(lg_vo, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    if a.size == 0:
        raise NoVoPoints("segment has no VO points")
    return float(np.mean(b - a))


def _labels_array(labels) -> np.ndarray:
    return labels.labels if isinstance(labels, SegmentLabels) else np.asarray(labels)


def summarize_segments(labels, lg_net: np.ndarray, vo: SparseDepthMap) -> SegmentSummary:
    """Mean network log-depth and VO-aligned target for every segment."""
    lab = _labels_array(labels)
    lg_net = np.asarray(lg_net, dtype=float)
    if lab.shape != lg_net.shape:
        raise ShapeMismatch(f"labels {lab.shape} vs log-depth {lg_net.shape}")
    vo.check_bounds(*lg_net.shape)
    flat = lab.reshape(-1).astype(np.int64)
    k = int(flat.max()) + 1
    counts = np.bincount(flat, minlength=k)
    if np.any(counts == 0):
        raise ShapeMismatch("segment ids must be compact (every id 0..K-1 used)")
    lg0 = np.bincount(flat, weights=lg_net.reshape(-1), minlength=k) / counts

    seg = lab[vo.v, vo.u].astype(np.int64)
    resid = np.log(vo.depth) - lg_net[vo.v, vo.u]
    n_vo = np.bincount(seg, minlength=k)
    sum_r = np.bincount(seg, weights=resid, minlength=k)
    lg_tar = np.full(k, np.nan)
    has = n_vo > 0
    lg_tar[has] = lg0[has] + sum_r[has] / n_vo[has]
    return SegmentSummary(lg0=lg0, lg_tar=lg_tar, vo_count=n_vo)


def _vo_weights(summary: SegmentSummary, w: FusionWeights) -> tuple[np.ndarray, np.ndarray]:
    lam1 = np.where(summary.has_vo, w.lambda1, 0.0)
    tar = np.where(summary.has_vo, summary.lg_tar, 0.0)
    return lam1, tar


def outer_system(summary: SegmentSummary, w: FusionWeights) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``(A, B)`` of the outer stationarity conditions."""
    n = len(summary)
    lam1, tar = _vo_weights(summary, w)
    lg0 = summary.lg0
    A = np.full((n, n), -w.lambda0)
    A[np.diag_indices(n)] = (n - 1) * w.lambda0 + lam1 + w.lambda2
    B = w.lambda2 * lg0 + lam1 * tar + w.lambda0 * (n * lg0 - lg0.sum())
    return A, B


def _check_solvable(summary: SegmentSummary, w: FusionWeights) -> None:
    if len(summary) == 0:
        raise ValueError("no segments")
    if not w.lambda0 + w.lambda2 > 0:
        raise SingularSystem("lambda0 + lambda2 must be positive")


def solve_outer(summary: SegmentSummary, w: FusionWeights, method: str = "fast") -> np.ndarray:
    """Optimal per-segment mean log-depths.

    ``method="fast"`` solves ``A lg = B`` in O(N) using
    ``A = diag(N lambda0 + lambda1_k + lambda2) - lambda0 * 1 1^T`` and the
    Sherman-Morrison identity; ``method="dense"`` uses a direct LU solve.
    When no segment has VO points the network prior is already optimal and
    ``lg0`` is returned unchanged.
    """
    _check_solvable(summary, w)
    if not summary.has_vo.any():
        return summary.lg0.copy()
    if method == "dense":
        A, B = outer_system(summary, w)
        try:
            return np.linalg.solve(A, B)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
    if method != "fast":
        raise ValueError(f"unknown method {method!r}")

    n = len(summary)
    lam1, tar = _vo_weights(summary, w)
    lg0 = summary.lg0
    diag = n * w.lambda0 + lam1 + w.lambda2
    B = w.lambda2 * lg0 + lam1 * tar + w.lambda0 * (n * lg0 - lg0.sum())
    if np.any(diag <= 0):
        raise SingularSystem("zero diagonal in outer system")
    y = B / diag
    z = 1.0 / diag
    # 1 - lambda0 * sum(z), rewritten without cancellation
    denom = np.sum((lam1 + w.lambda2) * z) / n
    if not denom > 0:
        raise SingularSystem("outer system is singular (no VO or prior anchor)")
    return y + z * (w.lambda0 * y.sum() / denom)


def outer_objective(lg, summary: SegmentSummary, w: FusionWeights) -> float:
    """Segment-level objective whose stationarity conditions are ``A lg = B``."""
    lg = np.asarray(lg, dtype=float)
    lam1, tar = _vo_weights(summary, w)
    e = lg - summary.lg0
    n = len(e)
    # sum over unordered pairs of (e_k - e_j)^2
    pair = n * np.sum(e * e) - np.sum(e) ** 2
    vo = np.sum(np.where(lam1 > 0, lam1 * (tar - lg) ** 2, 0.0))
    return float(w.lambda0 * pair + vo + w.lambda2 * np.sum(e * e))


def apply_segment_correction(lg_net, labels, lg_seg, lg0) -> np.ndarray:
    """Shift every pixel's log-depth by its segment's ``lg_seg - lg0``."""
    lab = _labels_array(labels)
    lg_net = np.asarray(lg_net, dtype=float)
    shift = np.asarray(lg_seg, dtype=float) - np.asarray(lg0, dtype=float)
    return lg_net + shift[lab]


def pixel_objective(lg_out, lg_net, vo: SparseDepthMap, w: FusionWeights) -> float:
    """Pixel-level objective: all-pairs relative log-depth consistency plus VO fit.

    The consistency sum runs over ordered pixel pairs ``(i, j)``.
    """
    e = (np.asarray(lg_out, dtype=float) - np.asarray(lg_net, dtype=float)).reshape(-1)
    n = e.size
    consist = 2.0 * n * np.sum(e * e) - 2.0 * np.sum(e) ** 2
    lg_out = np.asarray(lg_out, dtype=float)
    vo_term = np.sum((np.log(vo.depth) - lg_out[vo.v, vo.u]) ** 2)
    return float(w.lambda0 * consist + w.lambda1 * vo_term)


def _conjugate_gradient(matvec, b, tol=1e-13, max_iter=None):
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = r @ r
    stop = (tol * np.linalg.norm(b)) ** 2
    for _ in range(max_iter or 10 * len(b)):
        if rs <= stop:
            break
        Ap = matvec(p)
        alpha = rs / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = r @ r
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def pixelwise_oracle(lg_net, vo: SparseDepthMap, w: FusionWeights) -> np.ndarray:
    """Minimise :func:`pixel_objective` over every pixel by conjugate gradients.

    Reference solution for tiny images only. The objective is unchanged by a
    uniform log shift when no VO term is active; the mean log-depth is then
    pinned to the network's.
    """
    lg_net = np.asarray(lg_net, dtype=float)
    H, W = lg_net.shape
    n = H * W
    if n > PIXELWISE_MAX_PIXELS:
        raise TooLarge(f"{H}x{W} exceeds the {PIXELWISE_MAX_PIXELS}-pixel oracle cap")
    vo.check_bounds(H, W)
    if len(vo) == 0 or w.lambda1 == 0:
        return lg_net.copy()
    idx = vo.v * W + vo.u
    m = np.zeros(n)
    np.add.at(m, idx, w.lambda1)
    r = np.zeros(n)
    np.add.at(r, idx, w.lambda1 * (np.log(vo.depth) - lg_net.reshape(-1)[idx]))
    l0 = w.lambda0

    def matvec(e):
        # half the Hessian of the objective in the shift e = lg_out - lg_net
        return 2.0 * l0 * (n * e - e.sum()) + m * e

    e = _conjugate_gradient(matvec, r)
    return lg_net + e.reshape(H, W)


@dataclass
class FusionResult:
    depth: np.ndarray
    lg: np.ndarray
    segments: SegmentLabels
    summary: SegmentSummary
    lg_seg: np.ndarray
    timings: dict = field(default_factory=dict)


def fuse(
    image: np.ndarray,
    lg_net: np.ndarray,
    vo: SparseDepthMap,
    slic: SlicParams = SlicParams(),
    weights: FusionWeights = FusionWeights(),
    d_min: float = DEFAULT_D_MIN,
    d_max: float = DEFAULT_D_MAX,
    segments: SegmentLabels | None = None,
) -> FusionResult:
    """Segment the frame and fuse network log-depth with VO depth.

    ``image`` is RGB in ``[0, 1]``. Pass ``segments`` to reuse an existing
    segmentation. ``timings`` reports ``segment`` and ``optimize`` seconds.
    """
    lg_net = np.asarray(lg_net, dtype=float)
    if image.shape[:2] != lg_net.shape:
        raise ShapeMismatch(f"image {image.shape} vs log-depth {lg_net.shape}")
    timings = {}
    t0 = time.perf_counter()
    if segments is None:
        segments = segment(rgb_to_lab(image), np.exp(lg_net), slic)
    t1 = time.perf_counter()
    timings["segment"] = t1 - t0

    summary = summarize_segments(segments, lg_net, vo)
    lg_seg = solve_outer(summary, weights)
    lg = apply_segment_correction(lg_net, segments, lg_seg, summary.lg0)
    depth = np.clip(np.exp(lg), d_min, d_max)
    timings["optimize"] = time.perf_counter() - t1
    return FusionResult(depth, lg, segments, summary, lg_seg, timings)
