"""Monocular depth evaluation: Abs Rel, Sq Rel, RMSE, RMSE log and delta accuracies."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import EmptyList, NoValidPixels, ShapeMismatch

METRIC_NAMES = ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3")


@dataclass(frozen=True)
class DepthEvalResult:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    n_pixels: int

    def as_row(self) -> str:
        """Tab-separated ``abs_rel sq_rel rmse rmse_log d1 d2 d3 n``."""
        vals = [f"{getattr(self, k):.6f}" for k in METRIC_NAMES]
        return "\t".join(vals + [str(self.n_pixels)])

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EvalConfig:
    use_median_scaling: bool = False
    min_depth: float = 1e-3
    max_depth: float = 80.0
    eigen_crop: bool = False

    def __post_init__(self):
        if not 0 < self.min_depth < self.max_depth:
            raise ValueError(f"need 0 < min_depth < max_depth, got {self.min_depth}, {self.max_depth}")


def eigen_crop_mask(height: int, width: int) -> np.ndarray:
    """Standard KITTI Eigen-split evaluation crop as a boolean mask."""
    crop = np.array(
        [0.40810811 * height, 0.99189189 * height, 0.03594771 * width, 0.96405229 * width]
    ).astype(np.int32)
    m = np.zeros((height, width), dtype=bool)
    m[crop[0]:crop[1], crop[2]:crop[3]] = True
    return m


def _valid(pred, gt, mask):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    valid = np.isfinite(gt) & (gt > 0)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != gt.shape:
            raise ShapeMismatch(f"mask {mask.shape} vs ground truth {gt.shape}")
        valid &= mask
    return pred, gt, valid


def median_scale(pred, gt, mask=None) -> tuple[np.ndarray, float]:
    """Rescale ``pred`` by ``median(gt) / median(pred)`` over valid pixels."""
    pred, gt, valid = _valid(pred, gt, mask)
    if not valid.any():
        raise NoValidPixels("no valid ground-truth pixels")
    factor = float(np.median(gt[valid]) / np.median(pred[valid]))
    return pred * factor, factor


def compute_errors(pred: np.ndarray, gt: np.ndarray) -> DepthEvalResult:
    """Metrics over already-selected 1-D arrays of matching depths."""
    if pred.size == 0:
        raise NoValidPixels("no pixels to evaluate")
    thresh = np.maximum(gt / pred, pred / gt)
    diff = pred - gt
    log_diff = np.log(pred) - np.log(gt)
    return DepthEvalResult(
        abs_rel=float(np.mean(np.abs(diff) / gt)),
        sq_rel=float(np.mean(diff**2 / gt)),
        rmse=float(np.sqrt(np.mean(diff**2))),
        rmse_log=float(np.sqrt(np.mean(log_diff**2))),
        delta1=float(np.mean(thresh < 1.25)),
        delta2=float(np.mean(thresh < 1.25**2)),
        delta3=float(np.mean(thresh < 1.25**3)),
        n_pixels=int(pred.size),
    )


def evaluate(pred, gt, mask=None, cfg: EvalConfig = EvalConfig()) -> DepthEvalResult:
    """Evaluate ``pred`` on pixels with finite ground truth inside the depth range.

    Median scaling, when enabled, is computed over the same valid pixels.
    """
    pred, gt, valid = _valid(pred, gt, mask)
    valid &= (gt >= cfg.min_depth) & (gt <= cfg.max_depth)
    if cfg.eigen_crop:
        valid &= eigen_crop_mask(*gt.shape)
    if not valid.any():
        raise NoValidPixels("no valid ground-truth pixels in range")
    p = pred[valid]
    g = gt[valid]
    if cfg.use_median_scaling:
        p = p * (np.median(g) / np.median(p))
    return compute_errors(p, g)


def aggregate(results) -> DepthEvalResult:
    """Pixel-count weighted mean of each metric."""
    results = list(results)
    if not results:
        raise EmptyList("nothing to aggregate")
    if len(results) == 1:
        return results[0]
    n = np.array([r.n_pixels for r in results], dtype=float)
    total = n.sum()
    out = {}
    for f in fields(DepthEvalResult):
        if f.name == "n_pixels":
            continue
        vals = np.array([getattr(r, f.name) for r in results])
        out[f.name] = float(np.sum(vals * n) / total) if total > 0 else float(vals.mean())
    return DepthEvalResult(n_pixels=int(total), **out)
