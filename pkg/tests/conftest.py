"""Shared helpers for the test suite."""
import numpy as np
import pytest

from rebartie.geometry import Pose, exp_se3


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)


def random_twist(rng, max_angle=np.pi - 1e-3, max_trans=2.0):
    """Twist with rotation angle uniform in (0, max_angle)."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(1e-6, max_angle)
    v = rng.uniform(-max_trans, max_trans, 3)
    return np.concatenate([angle * axis, v])


def random_pose(rng, max_angle=np.pi - 1e-2):
    return exp_se3(random_twist(rng, max_angle=max_angle))


def random_unit_quat(rng):
    return random_pose(rng).q
