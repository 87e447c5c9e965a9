import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from depthfuse.depth_codec import (
    adapt_bins_to_camera,
    decode_multichannel,
    decode_multichannel_grad,
    decode_sigmoid,
    depth_to_logits,
    limit_mean,
    make_bins,
    softmax,
    uniform_init_mean,
)
from depthfuse.errors import ChannelMismatch, InvalidRange


def test_sigmoid_examples():
    assert decode_sigmoid(0.0) == pytest.approx(1 / (0.01 + 0.5 * (10 - 0.01)), rel=1e-12)
    assert decode_sigmoid(0.0) == pytest.approx(0.19980, abs=1e-5)
    assert decode_sigmoid(800.0) == pytest.approx(0.1, rel=1e-12)
    assert decode_sigmoid(-800.0) == pytest.approx(100.0, rel=1e-12)
    with pytest.raises(InvalidRange):
        decode_sigmoid(0.0, 1.0, 1.0)


# beyond |x| ~ 30 the sigmoid saturates in double precision
@given(st.floats(-20, 20), st.floats(1e-3, 10))
def test_sigmoid_strictly_decreasing(x, dx):
    assert decode_sigmoid(x) > decode_sigmoid(x + dx)


def test_make_bins_examples():
    b = make_bins(1, 100, 2)
    np.testing.assert_allclose(b.bin_values, [10, 100], rtol=1e-15)
    assert b.ratio == pytest.approx(10)
    b = make_bins(0.1, 100, 3)
    np.testing.assert_allclose(b.bin_values, [1, 10, 100], rtol=1e-14)
    assert b.ratio == pytest.approx(10)
    with pytest.raises(InvalidRange):
        make_bins(0.1, 100, 1)
    with pytest.raises(InvalidRange):
        make_bins(1.0, 0.5, 4)


def test_decode_one_hot_and_uniform():
    bins = make_bins(0.1, 100, 16)
    for i in (0, 7, 15):
        x = np.zeros(16)
        x[i] = 40.0
        assert decode_multichannel(x, bins) == pytest.approx(bins.bin_values[i], rel=1e-6)
    assert decode_multichannel(np.zeros(2), make_bins(1, 100, 2)) == pytest.approx(55.0)
    big = make_bins(0.1, 100, 100_000)
    assert decode_multichannel(np.zeros(100_000), big) == pytest.approx(14.462, abs=0.01)
    with pytest.raises(ChannelMismatch):
        decode_multichannel(np.zeros(3), bins)


def test_limit_mean_examples():
    assert limit_mean(0.1, 100) == pytest.approx(99.9 / 6.907755, rel=1e-6)
    assert limit_mean(0.1, 100) == pytest.approx(14.4620, abs=1e-4)
    assert limit_mean(1, np.e) == pytest.approx(np.e - 1, rel=1e-12)


def test_uniform_mean_sweep():
    assert uniform_init_mean(make_bins(1, 100, 2)) == 55.0
    lim = limit_mean(0.1, 100)
    gaps = [uniform_init_mean(make_bins(0.1, 100, 2**k)) - lim for k in range(1, 17)]
    assert all(g > 0 for g in gaps)
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    assert all(lim + g > 10 for g in gaps)
    means = [uniform_init_mean(make_bins(0.1, 100, n)) for n in (10, 100, 10_000)]
    assert means[0] > means[1] > means[2] > lim


@settings(max_examples=50)
@given(arrays(np.float64, (5, 8), elements=st.floats(-1e3, 1e3)))
def test_decode_bounded(logits):
    bins = make_bins(0.1, 100, 8)
    d = decode_multichannel(logits, bins)
    assert np.all(d >= bins.bin_values[0]) and np.all(d <= bins.bin_values[-1])


def test_decode_permutation_equivariant(rng):
    bins = make_bins(0.1, 100, 12)
    x = rng.normal(size=(4, 12)) * 3
    perm = rng.permutation(12)
    shuffled = type(bins)(bins.d_min, bins.d_max, bins.bin_values[perm])
    np.testing.assert_allclose(decode_multichannel(x[:, perm], shuffled), decode_multichannel(x, bins),
                               rtol=1e-13)


def test_softmax_stable():
    z = softmax(np.array([1000.0, 1000.0, -1000.0]))
    np.testing.assert_allclose(z, [0.5, 0.5, 0.0])


def test_multichannel_gradient_finite_difference(rng):
    bins = make_bins(0.1, 100, 16)
    x = rng.normal(size=(20, 16)) * 2
    g = decode_multichannel_grad(x, bins)
    h = 1e-5
    for j in range(16):
        e = np.zeros(16)
        e[j] = h
        fd = (decode_multichannel(x + e, bins) - decode_multichannel(x - e, bins)) / (2 * h)
        np.testing.assert_allclose(g[:, j], fd, rtol=1e-5, atol=1e-9)


def test_camera_adaptation(rng):
    bins = make_bins(0.1, 100, 32)
    same = adapt_bins_to_camera(bins, 700.0, 700.0)
    np.testing.assert_array_equal(same.bin_values, bins.bin_values)
    double = adapt_bins_to_camera(bins, 1400.0, 700.0)
    np.testing.assert_allclose(double.bin_values, 2 * bins.bin_values, rtol=1e-15)
    x = rng.normal(size=(10, 32))
    s = 913.0 / 721.0
    adapted = adapt_bins_to_camera(bins, 913.0, 721.0)
    np.testing.assert_allclose(decode_multichannel(x, adapted), s * decode_multichannel(x, bins), rtol=1e-12)
    with pytest.raises(InvalidRange):
        adapt_bins_to_camera(bins, 0.0, 700.0)


def test_depth_to_logits_roundtrip(rng):
    bins = make_bins(0.1, 100, 64)
    d = rng.uniform(0.2, 99, size=(6, 7))
    back = decode_multichannel(depth_to_logits(d, bins), bins)
    np.testing.assert_allclose(back, d, rtol=1e-9)
    # exact bin values and clamping
    np.testing.assert_allclose(decode_multichannel(depth_to_logits(bins.bin_values, bins), bins),
                               bins.bin_values, rtol=1e-9)
    assert decode_multichannel(depth_to_logits(np.array(1000.0), bins), bins) == pytest.approx(100.0)
