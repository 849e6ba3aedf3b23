"""Simulated detector: noise model, dropout, outliers, determinism."""

import numpy as np
import pytest

from gbot.detector_sim import (
    CONDITION_NAMES,
    NoiseProfile,
    Observation,
    condition_profile,
    simulate_observation,
)
from gbot.keypoints import project

from conftest import random_model, random_pose


@pytest.fixture
def scene(rng):
    model = random_model(rng, oid="part")
    pose = random_pose(rng, max_angle=0.5, z_range=(0.7, 0.9))
    return model, pose


class TestNoiseProfile:
    def test_validation(self):
        with pytest.raises(ValueError):
            NoiseProfile(pixel_sigma=-1.0)
        with pytest.raises(ValueError):
            NoiseProfile(dropout_prob=1.5)
        with pytest.raises(ValueError):
            NoiseProfile(keypoint_outlier_prob=-0.1)

    def test_condition_table(self):
        assert CONDITION_NAMES == ("normal", "dynamic", "blur", "hand")
        normal = condition_profile("normal")
        assert (normal.pixel_sigma, normal.dropout_prob, normal.keypoint_outlier_prob) == (1.0, 0.02, 0.02)
        hand = condition_profile("hand", seed=5)
        assert hand.dropout_prob == 0.35 and hand.seed == 5
        assert condition_profile("blur").pixel_sigma == 4.0
        assert condition_profile("dynamic").dropout_prob == 0.10

    def test_unknown_condition(self):
        with pytest.raises(ValueError, match="unknown condition"):
            condition_profile("underwater")


class TestSimulateObservation:
    def test_zero_noise_reproduces_projection(self, scene, intr):
        model, pose = scene
        obs = simulate_observation(model, pose, intr, NoiseProfile(), 0)
        exact, visible = project(intr, pose, model.keypoints)
        assert obs.detected and isinstance(obs, Observation)
        np.testing.assert_array_equal(obs.keypoints_img[visible], exact[visible])
        np.testing.assert_array_equal(obs.confidences[visible], 1.0)

    def test_invisible_points_zero_confidence(self, intr, rng):
        model = random_model(rng)
        # Push the object far off-axis so some keypoints leave the image.
        pose = random_pose(rng)
        pose = type(pose)(pose.rotation, np.array([1.5, 0.0, 1.0]))
        obs = simulate_observation(model, pose, intr, NoiseProfile(), 0)
        _, visible = project(intr, pose, model.keypoints)
        assert not visible.all()
        np.testing.assert_array_equal(obs.confidences[~visible], 0.0)

    def test_dropout_one_never_detects(self, scene, intr):
        model, pose = scene
        for f in range(5):
            obs = simulate_observation(model, pose, intr, NoiseProfile(dropout_prob=1.0), f)
            assert not obs.detected
            assert obs.keypoints_img.shape == (0, 2) and obs.confidences.shape == (0,)

    def test_force_dropout(self, scene, intr):
        model, pose = scene
        obs = simulate_observation(model, pose, intr, NoiseProfile(), 0, force_dropout=True)
        assert not obs.detected

    def test_dropout_rate_statistics(self, scene, intr):
        model, pose = scene
        p = 0.3
        hits = sum(
            not simulate_observation(model, pose, intr, NoiseProfile(dropout_prob=p), f).detected
            for f in range(4000)
        )
        assert hits / 4000 == pytest.approx(p, rel=0.05)

    def test_pixel_noise_sigma_statistics(self, scene, intr):
        model, pose = scene
        sigma = 2.0
        exact, visible = project(intr, pose, model.keypoints)
        devs = []
        for f in range(600):
            obs = simulate_observation(model, pose, intr, NoiseProfile(pixel_sigma=sigma), f)
            devs.append((obs.keypoints_img[visible] - exact[visible]).ravel())
        devs = np.concatenate(devs)
        assert devs.std() == pytest.approx(sigma, rel=0.05)
        assert abs(devs.mean()) < 0.05

    def test_confidence_reflects_noise_magnitude(self, scene, intr):
        model, pose = scene
        exact, visible = project(intr, pose, model.keypoints)
        obs = simulate_observation(model, pose, intr, NoiseProfile(pixel_sigma=1.5), 3)
        resid = np.linalg.norm(obs.keypoints_img - np.where(np.isfinite(exact), exact, 0.0), axis=1)
        expect = np.maximum(0.2, 1.0 - resid / 8.0)
        np.testing.assert_allclose(obs.confidences[visible], expect[visible], atol=1e-12)

    def test_outlier_prob_one_marks_all(self, scene, intr):
        model, pose = scene
        obs = simulate_observation(
            model, pose, intr, NoiseProfile(keypoint_outlier_prob=1.0), 0
        )
        _, visible = project(intr, pose, model.keypoints)
        np.testing.assert_array_equal(obs.confidences[visible], 0.1)
        assert (obs.keypoints_img[:, 0] >= 0).all()
        assert (obs.keypoints_img[:, 0] <= intr.width).all()

    def test_outlier_rate_statistics(self, scene, intr):
        model, pose = scene
        p = 0.2
        _, visible = project(intr, pose, model.keypoints)
        n_out = 0
        n_tot = 0
        for f in range(600):
            obs = simulate_observation(
                model, pose, intr, NoiseProfile(keypoint_outlier_prob=p), f
            )
            n_out += int((obs.confidences[visible] == 0.1).sum())
            n_tot += int(visible.sum())
        assert n_out / n_tot == pytest.approx(p, rel=0.05)


class TestDeterminism:
    def test_bitwise_repeatable(self, scene, intr):
        model, pose = scene
        profile = NoiseProfile(pixel_sigma=2.0, dropout_prob=0.1, keypoint_outlier_prob=0.1, seed=9)
        a = simulate_observation(model, pose, intr, profile, 17)
        b = simulate_observation(model, pose, intr, profile, 17)
        assert a.detected == b.detected
        np.testing.assert_array_equal(a.keypoints_img, b.keypoints_img)
        np.testing.assert_array_equal(a.confidences, b.confidences)

    def test_varies_with_frame_seed_and_id(self, scene, intr, rng):
        model, pose = scene
        other = random_model(rng, oid="other")
        profile = NoiseProfile(pixel_sigma=2.0, seed=9)
        base = simulate_observation(model, pose, intr, profile, 17)
        diff_frame = simulate_observation(model, pose, intr, profile, 18)
        diff_seed = simulate_observation(
            model, pose, intr, NoiseProfile(pixel_sigma=2.0, seed=10), 17
        )
        diff_id = simulate_observation(other, pose, intr, profile, 17)
        for variant in (diff_frame, diff_seed):
            assert not np.array_equal(base.keypoints_img, variant.keypoints_img)
        assert not np.array_equal(base.keypoints_img, diff_id.keypoints_img)
