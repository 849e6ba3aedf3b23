"""Shared helpers for the test suite."""

import numpy as np
import pytest

from gbot.geom import RigidTransform, so3_exp
from gbot.keypoints import CameraIntrinsics, ObjectModel, project


def random_rotation(rng, max_angle=2.5):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return so3_exp(axis * rng.uniform(0.0, max_angle))


def random_pose(rng, max_angle=2.5, z_range=(0.45, 1.1)):
    """A pose whose origin lands comfortably inside the camera frustum."""
    z = rng.uniform(*z_range)
    t = np.array([rng.uniform(-0.15, 0.15) * z, rng.uniform(-0.1, 0.1) * z, z])
    return RigidTransform(random_rotation(rng, max_angle), t)


def random_model(rng, oid="obj", n_vertices=40, scale=0.05):
    vertices = rng.uniform(-scale, scale, size=(n_vertices, 3))
    return ObjectModel(id=oid, vertices=vertices)


def exact_correspondences(model, pose, intr):
    """Noiseless 3D-2D correspondences for every visible keypoint."""
    from gbot.pnp import Correspondence

    pixels, visible = project(intr, pose, model.keypoints)
    return [
        Correspondence(p, uv, 1.0)
        for p, uv, vis in zip(model.keypoints, pixels, visible)
        if vis
    ]


@pytest.fixture
def intr():
    return CameraIntrinsics(fx=600.0, fy=600.0, cx=640.0, cy=360.0, width=1280, height=720)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
