import numpy as np
import pytest

from depthfuse.geometry import CameraIntrinsics, RelativePose, rotation_from_axis_angle


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def camera():
    return CameraIntrinsics(120.0, 118.0, 31.5, 23.5, 64, 48)


def random_pose(rng, max_angle=0.2, max_t=1.0):
    axis = rng.normal(size=3)
    R = rotation_from_axis_angle(axis, rng.uniform(-max_angle, max_angle))
    t = rng.uniform(-max_t, max_t, size=3)
    if np.linalg.norm(t) < 0.05:
        t[0] += 0.5
    return RelativePose(R, t)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
