import numpy as np
import pytest

from depthfuse.errors import EmptyMask, NonPositiveDepth, ShapeMismatch
from depthfuse.losses import (
    SSIM_C1,
    SSIM_C2,
    PhotometricWeights,
    distill_loss,
    distill_loss_grad,
    masked_mean,
    photometric_loss,
    ssim,
)


def test_ssim_identity_and_symmetry(rng):
    a = rng.random((12, 15, 3))
    b = rng.random((12, 15, 3))
    np.testing.assert_allclose(ssim(a, a), 1.0, atol=1e-9)
    np.testing.assert_array_equal(ssim(a, b), ssim(b, a))
    s = ssim(a, b)
    assert np.all(s >= -1) and np.all(s <= 1)
    with pytest.raises(ShapeMismatch):
        ssim(a, b[:, :-1])


def test_ssim_constant_patches():
    s = ssim(np.zeros((5, 5)), np.ones((5, 5)))
    expected = SSIM_C1 / (1 + SSIM_C1)  # (C1)(C2) / ((1 + C1) C2)
    np.testing.assert_allclose(s, expected, rtol=1e-9)
    assert np.all(s < 0.01)


def test_ssim_against_direct_window_sums(rng):
    # independent evaluation at an interior pixel from the raw 3x3 window
    a = rng.random((7, 7))
    b = rng.random((7, 7))
    wa = a[2:5, 3:6].ravel()
    wb = b[2:5, 3:6].ravel()
    ma, mb = wa.mean(), wb.mean()
    va, vb = wa.var(), wb.var()
    cov = np.mean((wa - ma) * (wb - mb))
    ref = ((2 * ma * mb + SSIM_C1) * (2 * cov + SSIM_C2)) / ((ma**2 + mb**2 + SSIM_C1) * (va + vb + SSIM_C2))
    assert ssim(a, b)[3, 4] == pytest.approx(ref, rel=1e-10)


def test_photometric_examples(rng):
    a = rng.random((9, 9, 3))
    assert np.all(photometric_loss(a, a) == 0)
    # constant images 0 and 1 give SSIM near zero, so the SSIM term is ~0.5
    l = photometric_loss(np.zeros((4, 4)), np.ones((4, 4)))
    np.testing.assert_allclose(l, 0.85 * 0.5 * (1 - SSIM_C1 / (1 + SSIM_C1)) + 0.15, rtol=1e-9)
    assert l[0, 0] == pytest.approx(0.575, abs=1e-4)
    b = rng.random((9, 9, 3))
    assert np.all(photometric_loss(a, b) >= 0)
    pure_l1 = photometric_loss(a, b, PhotometricWeights(0.0, 1.0))
    np.testing.assert_allclose(pure_l1, np.abs(a - b).mean(axis=-1))


def test_distill_examples():
    one = np.ones(3)
    np.testing.assert_array_equal(distill_loss(one * 5, one * 5, 0 * one), 0)
    np.testing.assert_allclose(distill_loss(np.e * one, one, 0 * one), 1.0, rtol=1e-15)
    with pytest.raises(NonPositiveDepth):
        distill_loss(np.array([0.0]), np.array([1.0]), np.array([0.0]))


def test_distill_optimal_sigma_grid_search():
    for r in (0.05, 0.5, 2.0):
        grid = np.linspace(np.log(r) - 2, np.log(r) + 2, 40001)
        n = len(grid)
        vals = distill_loss(np.full(n, np.exp(r)), np.ones(n), grid)
        assert grid[np.argmin(vals)] == pytest.approx(np.log(r), abs=2e-4)
        assert vals.min() == pytest.approx(1 + np.log(r), abs=1e-7)


def test_distill_scale_invariant(rng):
    d = rng.uniform(0.5, 50, 20)
    dp = rng.uniform(0.5, 50, 20)
    s = rng.normal(size=20)
    np.testing.assert_allclose(distill_loss(7.3 * d, 7.3 * dp, s), distill_loss(d, dp, s), rtol=1e-12, atol=1e-14)


def test_distill_gradient_finite_difference(rng):
    n = 100
    d = rng.uniform(0.5, 50, n)
    dp = d * np.exp(rng.choice([-1, 1], n) * rng.uniform(0.05, 1.0, n))
    s = rng.normal(size=n)
    gd, gs = distill_loss_grad(d, dp, s)
    h = 1e-6
    fd_d = (distill_loss(d * (1 + h), dp, s) - distill_loss(d * (1 - h), dp, s)) / (2 * h * d)
    fd_s = (distill_loss(d, dp, s + h) - distill_loss(d, dp, s - h)) / (2 * h)
    np.testing.assert_allclose(gd, fd_d, rtol=1e-5)
    np.testing.assert_allclose(gs, fd_s, rtol=1e-5)
    gd0, _ = distill_loss_grad(np.ones(1), np.ones(1), np.zeros(1))
    assert gd0[0] == 0


def test_masked_mean():
    m = np.array([[0.0, 100.0], [0.0, 100.0]])
    assert masked_mean(m) == 50.0
    assert masked_mean(m, np.ones_like(m, bool)) == 50.0
    assert masked_mean(m, m == 0) == 0.0
    with pytest.raises(EmptyMask):
        masked_mean(m, np.zeros_like(m, bool))
    with pytest.raises(ShapeMismatch):
        masked_mean(m, np.ones(3, bool))
