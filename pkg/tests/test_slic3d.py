import numpy as np
import pytest

from depthfuse.errors import ImageTooSmall, ShapeMismatch
from depthfuse.slic3d import (
    PixelFeature,
    SlicParams,
    _cost,
    assign,
    grid_centers,
    lab_to_rgb,
    rgb_to_lab,
    segment,
    slic_distance,
)


def random_frame(rng, h=32, w=32):
    """Piecewise colour/depth blobs plus noise, as a LAB image and depth map."""
    rgb = np.clip(rng.random((4, 4, 3))[np.repeat(np.arange(4), h // 4)][:, np.repeat(np.arange(4), w // 4)]
                  + 0.05 * rng.normal(size=(h, w, 3)), 0, 1)
    depth = rng.uniform(2, 40, (4, 4))[np.repeat(np.arange(4), h // 4)][:, np.repeat(np.arange(4), w // 4)]
    depth = depth * np.exp(0.05 * rng.normal(size=(h, w)))
    return rgb_to_lab(rgb), depth


def _features(lab, depth):
    H, W = depth.shape
    v, u = np.mgrid[0:H, 0:W].astype(float)
    return lab.reshape(-1, 3), np.stack([u, v], -1).reshape(-1, 2), depth.reshape(-1)


def test_lab_examples(rng):
    white = rgb_to_lab(np.ones((1, 1, 3)))[0, 0]
    assert white[0] == pytest.approx(100, abs=1e-3)
    assert abs(white[1]) < 0.01 and abs(white[2]) < 0.01
    assert rgb_to_lab(np.zeros((1, 1, 3)))[0, 0, 0] == 0
    img = rng.random((8, 8, 3))
    assert np.max(np.abs(lab_to_rgb(rgb_to_lab(img)) - img)) < 1e-4


def test_distance_examples(rng):
    p = SlicParams()
    a = PixelFeature(rng.normal(size=3), rng.normal(size=2), 4.0)
    b = PixelFeature(rng.normal(size=3), rng.normal(size=2), 9.0)
    assert slic_distance(a, a, p) == 0
    assert slic_distance(a, b, p) == slic_distance(b, a, p)
    only_d = SlicParams(lambda_lab=0.0, lambda_d=1.0, lambda_pix=0.0)
    assert slic_distance(PixelFeature(np.zeros(3), np.zeros(2), 3.0),
                         PixelFeature(np.ones(3), np.ones(2), 8.0), only_d) == 5.0
    # hand evaluation of the three terms
    a = PixelFeature(np.array([3.0, 4.0, 0.0]), np.array([0.0, 0.0]), 1.0)
    b = PixelFeature(np.zeros(3), np.array([6.0, 8.0]), 3.0)
    assert slic_distance(a, b, SlicParams(step=10)) == pytest.approx(0.1 * 5 + 0.2 * 2 + 0.1 * 10)


def test_params_validation():
    with pytest.raises(ValueError):
        SlicParams(step=1)
    with pytest.raises(ValueError):
        SlicParams(lambda_lab=0, lambda_d=0, lambda_pix=0)
    with pytest.raises(ValueError):
        SlicParams(max_iter=0)
    assert SlicParams(step=8).pix_weight == 1 / 8


def test_input_errors(rng):
    lab, depth = random_frame(rng, 8, 8)
    with pytest.raises(ImageTooSmall):
        segment(lab, depth, SlicParams(step=16))
    with pytest.raises(ShapeMismatch):
        segment(lab, depth[:, :-1], SlicParams(step=4))


def test_grid_centers():
    c = grid_centers(32, 64, 16)
    assert c.shape == (8, 2)
    np.testing.assert_allclose(c[0], [7.5, 7.5])
    np.testing.assert_allclose(c[-1], [55.5, 23.5])


def test_uniform_image_keeps_grid_voronoi():
    H = W = 32
    lab = np.full((H, W, 3), [50.0, 10.0, -10.0])
    depth = np.full((H, W), 7.0)
    p = SlicParams(step=8)
    seg = segment(lab, depth, p)
    centers = grid_centers(H, W, 8)
    v, u = np.mgrid[0:H, 0:W]
    d2 = (u[..., None] - centers[:, 0]) ** 2 + (v[..., None] - centers[:, 1]) ** 2
    np.testing.assert_array_equal(seg.labels, np.argmin(d2, axis=-1))
    np.testing.assert_allclose(seg.center_xy, centers, atol=1e-12)


def test_block_boundary_alignment():
    H, W = 16, 32
    rgb = np.zeros((H, W, 3))
    rgb[:, :16] = [0.9, 0.2, 0.2]
    rgb[:, 16:] = [0.2, 0.3, 0.9]
    depth = np.where(np.arange(W) < 16, 4.0, 25.0) * np.ones((H, 1))
    seg = segment(rgb_to_lab(rgb), depth, SlicParams(step=H // 2))
    left = set(np.unique(seg.labels[:, :16]))
    right = set(np.unique(seg.labels[:, 16:]))
    assert not left & right


@pytest.mark.parametrize("seed", range(8))
def test_assignment_optimal_and_centres_are_means(seed):
    rng = np.random.default_rng(seed)
    lab, depth = random_frame(rng)
    p = SlicParams(step=8)
    seg = segment(lab, depth, p)
    f_lab, f_xy, f_d = _features(lab, depth)
    # every recorded label minimises the cost over all centres searched
    costs = _cost(f_lab[:, None], f_xy[:, None], f_d[:, None],
                  seg.search_lab[None], seg.search_xy[None], seg.search_depth[None], p)
    raw = seg.search_labels.reshape(-1)
    np.testing.assert_array_equal(raw, np.argmin(costs, axis=1))
    # and every final centre is the mean of its members
    lab_ids = seg.labels.reshape(-1)
    for k in range(seg.n_segments):
        m = lab_ids == k
        assert m.sum() == seg.counts[k]
        np.testing.assert_allclose(seg.center_lab[k], f_lab[m].mean(0), atol=1e-9)
        np.testing.assert_allclose(seg.center_xy[k], f_xy[m].mean(0), atol=1e-9)
        assert seg.center_depth[k] == pytest.approx(f_d[m].mean(), abs=1e-9)
    assert set(np.unique(seg.labels)) == set(range(seg.n_segments))


@pytest.mark.parametrize("shape", [(32, 32), (48, 64), (64, 64)])
def test_windowed_equals_exhaustive(rng, shape):
    for _ in range(3):
        lab, depth = random_frame(rng, *shape)
        a = segment(lab, depth, SlicParams())
        b = segment(lab, depth, SlicParams(exhaustive=True))
        np.testing.assert_array_equal(a.labels, b.labels)


def test_assign_fallback_matches_full_search(rng):
    # centres far from their pixels' windows must still be found
    lab, depth = random_frame(rng, 32, 32)
    c_xy = np.array([[0.0, 0.0], [31.0, 31.0]])
    c_lab = lab[[0, -1], [0, -1]]
    c_d = depth[[0, -1], [0, -1]]
    p = SlicParams(step=4)
    win, cw = assign(lab, depth, c_lab, c_xy, c_d, p)
    full, cf = assign(lab, depth, c_lab, c_xy, c_d, SlicParams(step=4, exhaustive=True))
    np.testing.assert_array_equal(win, full)
    np.testing.assert_array_equal(cw, cf)


def test_deterministic(rng):
    lab, depth = random_frame(rng)
    a = segment(lab, depth, SlicParams(step=8))
    b = segment(lab.copy(), depth.copy(), SlicParams(step=8))
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.objective == b.objective


def test_objective_trace_shape(rng):
    lab, depth = random_frame(rng)
    seg = segment(lab, depth, SlicParams(step=8, max_iter=4))
    assert len(seg.objective) == 5
    assert seg.objective[-1] <= seg.objective[0]
