"""PnP: Gauss-Newton refinement, Jacobian correctness, RANSAC robustness."""

import numpy as np
import pytest

from gbot import kernels
from gbot.geom import (
    RigidTransform,
    Twist,
    compose,
    exp_twist,
    rotation_error_deg,
    translation_error,
)
from gbot.keypoints import project
from gbot.pnp import (
    Correspondence,
    NoConsensusError,
    PnPSolution,
    RansacParams,
    UnsolvableError,
    gauss_newton_pose,
    ransac_pnp,
    reprojection_errors,
    solve_pnp,
)

from conftest import exact_correspondences, random_model, random_pose


def _noisy_corrs(model, pose, intr, rng, sigma=0.0, outlier_frac=0.0):
    pixels, visible = project(intr, pose, model.keypoints)
    corrs = []
    n = len(pixels)
    n_out = int(round(outlier_frac * n))
    outlier_set = set(rng.choice(n, size=n_out, replace=False).tolist())
    for i, (p, uv, vis) in enumerate(zip(model.keypoints, pixels, visible)):
        if not vis:
            continue
        if i in outlier_set:
            uv = np.array([rng.uniform(0, intr.width), rng.uniform(0, intr.height)])
        elif sigma > 0:
            uv = uv + rng.normal(0.0, sigma, size=2)
        corrs.append(Correspondence(p, uv, 1.0))
    return corrs


class TestCorrespondence:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Correspondence([0, 0, np.nan], [0, 0])
        with pytest.raises(ValueError):
            Correspondence([0, 0, 0], [np.inf, 0])

    def test_rejects_bad_confidence(self):
        with pytest.raises(ValueError):
            Correspondence([0, 0, 0], [0, 0], confidence=1.5)
        with pytest.raises(ValueError):
            Correspondence([0, 0, 0], [0, 0], confidence=-0.1)


class TestReprojectionErrors:
    def test_zero_for_exact_projection(self, intr, rng):
        model = random_model(rng)
        pose = random_pose(rng)
        pixels, vis = project(intr, pose, model.keypoints)
        errs = reprojection_errors(pose, model.keypoints[vis], pixels[vis], intr)
        np.testing.assert_allclose(errs, 0.0, atol=1e-9)

    def test_inf_behind_camera(self, intr):
        pose = RigidTransform(np.eye(3), np.array([0.0, 0.0, -1.0]))
        errs = reprojection_errors(pose, np.zeros((1, 3)), np.zeros((1, 2)), intr)
        assert errs[0] == np.inf


class TestSolvePnP:
    def test_identity_recovery_noiseless(self, intr, rng):
        for _ in range(50):
            model = random_model(rng)
            pose = random_pose(rng)
            corrs = exact_correspondences(model, pose, intr)
            if len(corrs) < 6:
                continue
            sol = solve_pnp(corrs, intr)
            assert isinstance(sol, PnPSolution)
            assert sol.converged
            assert translation_error(sol.pose.translation, pose.translation) < 1e-6
            assert rotation_error_deg(sol.pose.rotation, pose.rotation) < np.degrees(1e-6)
            assert sol.rms_px < 1e-5

    def test_warm_start_skips_bootstrap(self, intr, rng):
        model = random_model(rng)
        pose = random_pose(rng)
        corrs = exact_correspondences(model, pose, intr)
        nudge = exp_twist(Twist(np.array([0.01, -0.01, 0.02]), np.array([0.005, 0.0, -0.01])))
        sol = solve_pnp(corrs, intr, init=compose(nudge, pose))
        assert translation_error(sol.pose.translation, pose.translation) < 1e-6

    def test_too_few_correspondences(self, intr, rng):
        model = random_model(rng)
        pose = random_pose(rng)
        corrs = exact_correspondences(model, pose, intr)[:3]
        with pytest.raises(UnsolvableError):
            solve_pnp(corrs, intr)

    def test_zero_confidence_points_do_not_count(self, intr, rng):
        model = random_model(rng)
        pose = random_pose(rng)
        corrs = exact_correspondences(model, pose, intr)
        dead = [Correspondence(c.point_obj, c.point_img, 0.0) for c in corrs]
        with pytest.raises(UnsolvableError):
            solve_pnp(dead, intr)

    def test_colinear_points_rejected(self, intr):
        pts = np.stack([np.linspace(-0.05, 0.05, 6), np.zeros(6), np.zeros(6)], axis=1)
        pose = RigidTransform(np.eye(3), np.array([0.0, 0.0, 0.8]))
        pixels, _ = project(intr, pose, pts)
        corrs = [Correspondence(p, uv) for p, uv in zip(pts, pixels)]
        with pytest.raises(UnsolvableError):
            solve_pnp(corrs, intr)

    def test_zero_confidence_outlier_has_no_influence(self, intr, rng):
        model = random_model(rng)
        pose = random_pose(rng)
        corrs = exact_correspondences(model, pose, intr)
        spiked = corrs + [Correspondence(model.keypoints[0], [9999.0, 9999.0], 0.0)]
        a = solve_pnp(corrs, intr).pose
        b = solve_pnp(spiked, intr).pose
        np.testing.assert_allclose(a.rotation, b.rotation, atol=1e-12)
        np.testing.assert_allclose(a.translation, b.translation, atol=1e-12)

    def test_noise_robustness(self, intr, rng):
        ok = 0
        trials = 60
        for _ in range(trials):
            model = random_model(rng)
            pose = random_pose(rng, max_angle=1.5)
            corrs = _noisy_corrs(model, pose, intr, rng, sigma=1.0)
            if len(corrs) < 10:
                ok += 1  # skip degenerate framing, don't count against
                continue
            sol = solve_pnp(corrs, intr)
            if (
                translation_error(sol.pose.translation, pose.translation) < 0.02
                and rotation_error_deg(sol.pose.rotation, pose.rotation) < 3.0
            ):
                ok += 1
        assert ok >= int(0.9 * trials)


class TestGaussNewton:
    def test_monotone_cost(self, intr, rng):
        for _ in range(20):
            model = random_model(rng)
            pose = random_pose(rng)
            pixels, vis = project(intr, pose, model.keypoints)
            pts, uv = model.keypoints[vis], pixels[vis]
            if len(pts) < 6:
                continue
            uv_noisy = uv + rng.normal(0, 2.0, size=uv.shape)
            nudge = exp_twist(Twist(rng.uniform(-0.05, 0.05, 3), rng.uniform(-0.02, 0.02, 3)))
            init = compose(nudge, pose)
            w = np.ones(len(pts))
            res0, _, _ = kernels.reproj_residual_jacobian(
                pts, uv_noisy, w, init.rotation, init.translation,
                intr.fx, intr.fy, intr.cx, intr.cy,
            )
            _, _, cost = gauss_newton_pose(pts, uv_noisy, w, intr, init)
            assert cost <= float(res0 @ res0) + 1e-9

    def test_zero_iterations_returns_init(self, intr, rng):
        model = random_model(rng)
        pose = random_pose(rng)
        pixels, vis = project(intr, pose, model.keypoints)
        out, converged, _ = gauss_newton_pose(
            model.keypoints[vis], pixels[vis], np.ones(int(vis.sum())), intr, pose,
            max_iterations=0,
        )
        assert out is pose and not converged

    def test_jacobian_matches_finite_differences(self, intr, rng):
        def residual(pts, uv, w, pose):
            res, _, _ = kernels.reproj_residual_jacobian_numpy(
                pts, uv, w, pose.rotation, pose.translation,
                intr.fx, intr.fy, intr.cx, intr.cy,
            )
            return res

        for _ in range(20):
            model = random_model(rng)
            pose = random_pose(rng, max_angle=1.5)
            pixels, vis = project(intr, pose, model.keypoints)
            pts = model.keypoints[vis]
            if len(pts) < 8:
                continue
            uv = pixels[vis] + rng.normal(0, 3.0, size=(len(pts), 2))
            w = rng.uniform(0.2, 1.0, size=len(pts))
            _, jac, _ = kernels.reproj_residual_jacobian(
                pts, uv, w, pose.rotation, pose.translation,
                intr.fx, intr.fy, intr.cx, intr.cy,
            )
            eps = 1e-7
            fd = np.zeros_like(jac)
            for k in range(6):
                d = np.zeros(6)
                d[k] = eps
                plus = compose(exp_twist(Twist.from_vector(d)), pose)
                minus = compose(exp_twist(Twist.from_vector(-d)), pose)
                fd[:, k] = (residual(pts, uv, w, plus) - residual(pts, uv, w, minus)) / (2 * eps)
            rel = np.linalg.norm(jac - fd) / max(np.linalg.norm(fd), 1e-12)
            assert rel < 1e-4


class TestRansac:
    def test_all_inliers_noiseless(self, intr, rng):
        model = random_model(rng)
        pose = random_pose(rng)
        corrs = exact_correspondences(model, pose, intr)
        est, inliers = ransac_pnp(corrs, intr, RansacParams(seed=1))
        assert len(inliers) == len(corrs)
        assert translation_error(est.translation, pose.translation) < 1e-6

    def test_outlier_rejection(self, intr, rng):
        successes = 0
        for trial in range(40):
            model = random_model(rng)
            pose = random_pose(rng, max_angle=1.5)
            corrs = _noisy_corrs(model, pose, intr, rng, sigma=0.0, outlier_frac=0.3)
            if len(corrs) < 12:
                successes += 1
                continue
            est, inliers = ransac_pnp(corrs, intr, RansacParams(seed=trial))
            if (
                translation_error(est.translation, pose.translation) < 1e-3
                and rotation_error_deg(est.rotation, pose.rotation) < 0.1
            ):
                successes += 1
        assert successes >= 38

    def test_pure_noise_raises_no_consensus(self, intr, rng):
        pts = rng.uniform(-0.05, 0.05, size=(20, 3))
        uv = rng.uniform(0, 1280, size=(20, 2))
        corrs = [Correspondence(p, q) for p, q in zip(pts, uv)]
        with pytest.raises(NoConsensusError):
            ransac_pnp(corrs, intr, RansacParams(max_iterations=30, min_inliers=15, seed=0))

    def test_too_few_correspondences(self, intr, rng):
        model = random_model(rng)
        pose = random_pose(rng)
        corrs = exact_correspondences(model, pose, intr)[:5]
        with pytest.raises(NoConsensusError):
            ransac_pnp(corrs, intr, RansacParams(min_inliers=6))

    def test_deterministic_for_fixed_seed(self, intr, rng):
        model = random_model(rng)
        pose = random_pose(rng)
        corrs = _noisy_corrs(model, pose, intr, rng, sigma=1.0, outlier_frac=0.2)
        a_pose, a_in = ransac_pnp(corrs, intr, RansacParams(seed=42))
        b_pose, b_in = ransac_pnp(corrs, intr, RansacParams(seed=42))
        np.testing.assert_array_equal(a_pose.rotation, b_pose.rotation)
        np.testing.assert_array_equal(a_pose.translation, b_pose.translation)
        np.testing.assert_array_equal(a_in, b_in)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            RansacParams(max_iterations=0)
        with pytest.raises(ValueError):
            RansacParams(inlier_threshold_px=0)
        with pytest.raises(ValueError):
            RansacParams(min_inliers=3)
