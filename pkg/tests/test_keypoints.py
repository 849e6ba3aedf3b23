"""Object models, farthest point sampling, projection, OBJ parsing."""

import itertools
import math

import numpy as np
import pytest

from gbot.geom import RigidTransform, rotation_z
from gbot.keypoints import (
    DEFAULT_NUM_KEYPOINTS,
    CameraIntrinsics,
    ObjectModel,
    farthest_point_sample,
    load_obj,
    project,
)

from conftest import random_pose


def _min_pairwise(points):
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    return d.min()


class TestFarthestPointSample:
    def test_selects_segment_endpoints(self):
        pts = np.stack([np.linspace(0, 1, 11), np.zeros(11), np.zeros(11)], axis=1)
        idx = farthest_point_sample(pts, 2)
        assert set(idx.tolist()) == {0, 10}

    def test_unit_cube_opposite_corners(self):
        corners = np.array(list(itertools.product([0.0, 1.0], repeat=3)))
        idx = farthest_point_sample(corners, 2)
        a, b = corners[idx]
        assert np.linalg.norm(a - b) == pytest.approx(math.sqrt(3.0))

    def test_all_vertices_when_n_equals_len(self, rng):
        pts = rng.normal(size=(9, 3))
        idx = farthest_point_sample(pts, 9)
        assert sorted(idx.tolist()) == list(range(9))

    def test_prefix_property(self, rng):
        pts = rng.normal(size=(60, 3))
        full = farthest_point_sample(pts, 20)
        for k in range(1, 20):
            np.testing.assert_array_equal(farthest_point_sample(pts, k), full[:k])

    def test_greedy_oracle(self, rng):
        # Each added point must be the true argmax of min-distance to the
        # already-selected set (brute force over all vertices).
        for _ in range(10):
            pts = rng.normal(size=(40, 3))
            idx = farthest_point_sample(pts, 12)
            for k in range(1, 12):
                selected = pts[idx[:k]]
                mind = np.linalg.norm(pts[:, None, :] - selected[None], axis=2).min(axis=1)
                assert mind[idx[k]] == pytest.approx(mind.max())

    def test_spread_beats_random_subsets(self, rng):
        # FPS min-pairwise distance should beat random subsets of same size.
        pts = rng.normal(size=(120, 3))
        fps_spread = _min_pairwise(pts[farthest_point_sample(pts, 10)])
        for _ in range(20):
            sub = pts[rng.choice(120, size=10, replace=False)]
            assert fps_spread >= _min_pairwise(sub) - 1e-12

    def test_deterministic(self, rng):
        pts = rng.normal(size=(50, 3))
        np.testing.assert_array_equal(
            farthest_point_sample(pts, 17), farthest_point_sample(pts.copy(), 17)
        )

    def test_invalid_count(self, rng):
        pts = rng.normal(size=(5, 3))
        with pytest.raises(ValueError):
            farthest_point_sample(pts, 6)
        with pytest.raises(ValueError):
            farthest_point_sample(pts, 0)


class TestObjectModel:
    def test_default_keypoint_count(self, rng):
        model = ObjectModel(id="m", vertices=rng.normal(size=(50, 3)))
        assert len(model.keypoint_indices) == DEFAULT_NUM_KEYPOINTS == 17
        assert model.keypoints.shape == (17, 3)

    def test_small_mesh_caps_keypoints(self, rng):
        model = ObjectModel(id="m", vertices=rng.normal(size=(5, 3)))
        assert len(model.keypoint_indices) == 5

    def test_too_few_vertices(self, rng):
        with pytest.raises(ValueError):
            ObjectModel(id="m", vertices=rng.normal(size=(3, 3)))

    def test_duplicate_keypoint_indices(self, rng):
        with pytest.raises(ValueError):
            ObjectModel(id="m", vertices=rng.normal(size=(8, 3)), keypoint_indices=[0, 1, 1])

    def test_out_of_range_keypoint_index(self, rng):
        with pytest.raises(ValueError):
            ObjectModel(id="m", vertices=rng.normal(size=(8, 3)), keypoint_indices=[0, 8])


class TestCameraIntrinsics:
    def test_defaults_720p(self):
        intr = CameraIntrinsics(fx=600, fy=600, cx=640, cy=360)
        assert (intr.width, intr.height) == (1280, 720)

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(fx=0, fy=600, cx=640, cy=360)
        with pytest.raises(ValueError):
            CameraIntrinsics(fx=600, fy=600, cx=640, cy=360, width=0)


class TestProject:
    def test_optical_axis_hits_principal_point(self, intr):
        pose = RigidTransform(np.eye(3), np.array([0.0, 0.0, 1.0]))
        pix, vis = project(intr, pose, np.zeros((1, 3)))
        np.testing.assert_allclose(pix[0], [intr.cx, intr.cy], atol=1e-12)
        assert vis[0]

    def test_hand_computed_pixel(self, intr):
        pose = RigidTransform(np.eye(3), np.array([0.0, 0.0, 2.0]))
        # u = fx*x/z + cx = 600*0.1/2 + 640 = 670; v = 600*(-0.2)/2 + 360 = 300
        pix, vis = project(intr, pose, np.array([[0.1, -0.2, 0.0]]))
        np.testing.assert_allclose(pix[0], [670.0, 300.0], atol=1e-12)
        assert vis[0]

    def test_behind_camera_is_nan_invisible(self, intr):
        pose = RigidTransform(np.eye(3), np.array([0.0, 0.0, -1.0]))
        pix, vis = project(intr, pose, np.zeros((1, 3)))
        assert np.isnan(pix[0]).all() and not vis[0]

    def test_out_of_image_invisible(self, intr):
        pose = RigidTransform(np.eye(3), np.array([5.0, 0.0, 1.0]))
        pix, vis = project(intr, pose, np.zeros((1, 3)))
        assert np.isfinite(pix[0]).all() and not vis[0]

    def test_rotation_equivalence(self, intr, rng):
        # Rotating the object or pre-rotating points must agree.
        rot = rotation_z(0.4)
        pts = rng.uniform(-0.05, 0.05, size=(10, 3))
        t = np.array([0.0, 0.0, 0.8])
        a, _ = project(intr, RigidTransform(rot, t), pts)
        b, _ = project(intr, RigidTransform(np.eye(3), t), pts @ rot.T)
        np.testing.assert_allclose(a, b, atol=1e-10)

    def test_depth_scaling(self, intr, rng):
        pts = rng.uniform(-0.04, 0.04, size=(5, 2))
        pts3 = np.concatenate([pts, np.zeros((5, 1))], axis=1)
        near, _ = project(intr, RigidTransform(np.eye(3), [0, 0, 1.0]), pts3)
        far, _ = project(intr, RigidTransform(np.eye(3), [0, 0, 2.0]), pts3)
        centered_near = near - [intr.cx, intr.cy]
        centered_far = far - [intr.cx, intr.cy]
        np.testing.assert_allclose(centered_far, centered_near / 2.0, atol=1e-10)


OBJ_TEXT = """
# comment
v 0 0 0
v 1 0 0
v 0 1 0
v 0 0 1
v 1 1 1
vn 0 0 1
vt 0.5 0.5
f 1 2 3
f 1/1/1 2/2/1 4/3/1
usemtl whatever
"""


class TestLoadObj:
    def test_parses_vertices_and_faces(self):
        model = load_obj(OBJ_TEXT, "part")
        assert model.vertices.shape == (5, 3)
        assert model.faces == [(0, 1, 2), (0, 1, 3)]
        assert model.id == "part"
        assert len(model.keypoint_indices) == 5  # capped by vertex count

    def test_symmetric_flag_propagates(self):
        assert load_obj(OBJ_TEXT, "part", symmetric=True).symmetric

    def test_too_few_vertices(self):
        with pytest.raises(ValueError):
            load_obj("v 0 0 0\nv 1 1 1\n", "part")

    def test_keypoint_budget_bounds(self):
        with pytest.raises(ValueError):
            load_obj(OBJ_TEXT, "part", n_keypoints=3)
        with pytest.raises(ValueError):
            load_obj(OBJ_TEXT, "part", n_keypoints=25)

    def test_roundtrip_projection(self, intr, rng):
        model = load_obj(OBJ_TEXT, "part")
        pose = random_pose(rng, max_angle=0.3, z_range=(3.0, 4.0))
        pix, vis = project(intr, pose, model.keypoints)
        assert pix.shape == (len(model.keypoint_indices), 2)
        assert vis.dtype == bool
