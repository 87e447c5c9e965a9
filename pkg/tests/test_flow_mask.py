import numpy as np
import pytest

from depthfuse.flow_mask import build_static_mask, epipolar_deviation, mask_to_png_array
from depthfuse.geometry import CameraIntrinsics, RelativePose, fundamental_from_pose, rotation_from_axis_angle
from depthfuse.synth import analytic_flow, render, standard_scene

from conftest import random_pose


def _x_translation_F(K):
    return fundamental_from_pose(K, RelativePose(np.eye(3), [-0.5, 0.0, 0.0]))


def test_zero_flow_on_own_line(camera):
    # pure x-translation: each pixel lies on its own (horizontal) epipolar line
    dev = epipolar_deviation(np.zeros(camera.shape + (2,)), _x_translation_F(camera))
    assert np.max(dev) < 1e-9


def test_vertical_offset_is_deviation(camera):
    flow = np.zeros(camera.shape + (2,))
    flow[..., 0] = -3.0
    flow[10:20, 5:15, 1] = 20.0
    dev = epipolar_deviation(flow, _x_translation_F(camera))
    np.testing.assert_allclose(dev[10:20, 5:15], 20.0, atol=1e-9)
    mask = build_static_mask(dev, 10.0)
    expected = np.ones(camera.shape, bool)
    expected[10:20, 5:15] = False
    np.testing.assert_array_equal(mask, expected)


def test_static_scene_exact_flow(rng, camera):
    for _ in range(5):
        pose = random_pose(rng)
        depth = rng.uniform(3, 40, camera.shape)
        flow = analytic_flow(depth, camera, pose)
        dev = epipolar_deviation(flow, fundamental_from_pose(camera, pose))
        finite = np.isfinite(dev)
        assert np.mean(dev[finite] < 0.5) >= 0.99
        assert np.mean(~build_static_mask(dev)) < 0.01


def test_threshold_boundary_and_monotonicity(rng):
    dev = np.array([0.0, 9.999, 10.0, 10.001, np.inf])
    np.testing.assert_array_equal(build_static_mask(dev, 10.0), [True, True, True, False, False])
    assert build_static_mask(np.zeros((3, 3))).all()
    d = rng.uniform(0, 30, 200)
    prev = build_static_mask(d, 1.0)
    for t in (2.0, 5.0, 10.0, 25.0):
        cur = build_static_mask(d, t)
        assert np.all(cur[prev])
        prev = cur
    with pytest.raises(ValueError):
        build_static_mask(d, 0.0)


def test_mask_invariant_to_F_scale(rng, camera):
    pose = RelativePose(rotation_from_axis_angle([0, 1, 0], 0.05), [0.4, 0.1, 0.2])
    F = fundamental_from_pose(camera, pose)
    flow = rng.normal(scale=8, size=camera.shape + (2,))
    a = build_static_mask(epipolar_deviation(flow, F))
    b = build_static_mask(epipolar_deviation(flow, -37.5 * F))
    np.testing.assert_array_equal(a, b)


def test_synth_dynamic_region():
    scene = render(standard_scene(seed=1, dynamic_motion=(0.0, 20.0)))
    F = fundamental_from_pose(scene.camera, scene.pose)
    dev = epipolar_deviation(scene.flow, F)
    np.testing.assert_allclose(dev[scene.dynamic], 20.0, atol=1e-9)
    assert np.max(dev[~scene.dynamic]) < 0.5


def test_png_array():
    np.testing.assert_array_equal(mask_to_png_array(np.array([True, False])), [255, 0])
    assert mask_to_png_array(np.array([True])).dtype == np.uint8
