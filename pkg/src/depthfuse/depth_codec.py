"""Decoding raw network outputs into metric depth.

Two decoders are provided: the single-channel inverse-depth sigmoid decode and
the multichannel decode, where the prediction is the softmax-weighted mean of
geometrically spaced depth bins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChannelMismatch, InvalidRange

DEFAULT_D_MIN = 0.1
DEFAULT_D_MAX = 100.0
DEFAULT_N_BINS = 64


def _check_range(d_min: float, d_max: float) -> None:
    if not (0 < d_min < d_max) or not np.isfinite(d_max):
        raise InvalidRange(f"need 0 < d_min < d_max, got d_min={d_min}, d_max={d_max}")


@dataclass(frozen=True)
class BinSpec:
    d_min: float
    d_max: float
    bin_values: np.ndarray

    def __post_init__(self):
        values = np.array(self.bin_values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "bin_values", values)

    @property
    def n_bins(self) -> int:
        return len(self.bin_values)

    @property
    def ratio(self) -> float:
        return float(self.bin_values[1] / self.bin_values[0])


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def decode_sigmoid(x, d_min: float = DEFAULT_D_MIN, d_max: float = DEFAULT_D_MAX):
    """Depth from a single logit: ``1/d = 1/d_max + sigmoid(x) (1/d_min - 1/d_max)``."""
    _check_range(d_min, d_max)
    scalar = np.ndim(x) == 0
    inv = 1.0 / d_max + sigmoid(np.atleast_1d(x)) * (1.0 / d_min - 1.0 / d_max)
    d = 1.0 / inv
    return float(d[0]) if scalar else d


def make_bins(d_min: float = DEFAULT_D_MIN, d_max: float = DEFAULT_D_MAX,
              n_bins: int = DEFAULT_N_BINS) -> BinSpec:
    """Geometric bins ``d_i = d_min (d_max/d_min)^(i/N)`` for ``i = 1..N``.

    The top bin equals ``d_max`` exactly; the lowest bin is ``d_min * q``.
    """
    _check_range(d_min, d_max)
    if int(n_bins) != n_bins or n_bins < 2:
        raise InvalidRange(f"need at least 2 bins, got {n_bins}")
    n = int(n_bins)
    i = np.arange(1, n + 1)
    values = d_min * np.exp(np.log(d_max / d_min) * i / n)
    values[-1] = d_max
    return BinSpec(d_min, d_max, values)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def _check_channels(logits: np.ndarray, bins: BinSpec) -> None:
    if logits.shape[-1] != bins.n_bins:
        raise ChannelMismatch(
            f"logits have {logits.shape[-1]} channels but there are {bins.n_bins} bins"
        )


def decode_multichannel(logits: np.ndarray, bins: BinSpec) -> np.ndarray:
    """Softmax-weighted mean of the bin depths along the last axis."""
    logits = np.asarray(logits, dtype=float)
    _check_channels(logits, bins)
    z = softmax(logits, axis=-1)
    d = z @ bins.bin_values
    # rounding can step a hair outside the hull of the bins
    return np.clip(d, bins.bin_values.min(), bins.bin_values.max())


def decode_multichannel_grad(logits: np.ndarray, bins: BinSpec) -> np.ndarray:
    """Gradient of each decoded depth w.r.t. its own logits.

    ``dd/dx_j = z_j (d_j - d)``; same shape as ``logits``.
    """
    logits = np.asarray(logits, dtype=float)
    _check_channels(logits, bins)
    z = softmax(logits, axis=-1)
    d = z @ bins.bin_values
    return z * (bins.bin_values - d[..., None])


def uniform_init_mean(bins: BinSpec) -> float:
    """Depth decoded from a uniform softmax, i.e. the plain mean of the bins."""
    return float(np.mean(bins.bin_values))


def limit_mean(d_min: float = DEFAULT_D_MIN, d_max: float = DEFAULT_D_MAX) -> float:
    """Large-N limit of :func:`uniform_init_mean`: ``(d_max - d_min) / ln(d_max/d_min)``."""
    _check_range(d_min, d_max)
    return (d_max - d_min) / (np.log(d_max) - np.log(d_min))


def adapt_bins_to_camera(bins: BinSpec, fx: float, f_base: float) -> BinSpec:
    """Rescale every bin by ``fx / f_base`` so one network serves several cameras."""
    if not (fx > 0 and f_base > 0):
        raise InvalidRange(f"focal lengths must be positive, got fx={fx}, f_base={f_base}")
    s = fx / f_base
    return BinSpec(bins.d_min * s, bins.d_max * s, bins.bin_values * s)


def depth_to_logits(depth: np.ndarray, bins: BinSpec, floor: float = -60.0) -> np.ndarray:
    """Logits whose multichannel decode reproduces ``depth``.

    Each depth is split linearly between its two neighbouring bins; every
    other channel gets ``floor``, which leaks a weight of about ``exp(floor)``.
    Depths are clamped to the bin range first.
    """
    d = np.clip(np.asarray(depth, dtype=float), bins.bin_values[0], bins.bin_values[-1])
    values = bins.bin_values
    hi = np.clip(np.searchsorted(values, d, side="left"), 1, len(values) - 1)
    lo = hi - 1
    w_hi = (d - values[lo]) / (values[hi] - values[lo])
    out = np.full(d.shape + (len(values),), floor)
    with np.errstate(divide="ignore"):
        l_lo = np.maximum(np.log1p(-w_hi), floor)
        l_hi = np.maximum(np.log(w_hi), floor)
    np.put_along_axis(out, lo[..., None], l_lo[..., None], axis=-1)
    np.put_along_axis(out, hi[..., None], l_hi[..., None], axis=-1)
    return out
