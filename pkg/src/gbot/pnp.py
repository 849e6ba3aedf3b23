"""Pose recovery from 2D-3D correspondences: Gauss-Newton PnP inside RANSAC."""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from . import kernels
from .geom import RigidTransform, Twist, compose, exp_twist
from .keypoints import CameraIntrinsics


class UnsolvableError(ValueError):
    """Too few or degenerate correspondences for PnP."""


class NoConsensusError(RuntimeError):
    """RANSAC found no inlier set of the required size."""


@dataclass(frozen=True)
class Correspondence:
    """One 3D model point, its observed pixel, and a detection confidence."""

    point_obj: np.ndarray
    point_img: np.ndarray
    confidence: float = 1.0

    def __post_init__(self):
        obj = np.asarray(self.point_obj, dtype=np.float64).reshape(3)
        img = np.asarray(self.point_img, dtype=np.float64).reshape(2)
        if not (np.isfinite(obj).all() and np.isfinite(img).all()):
            raise ValueError("correspondence entries must be finite")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")
        object.__setattr__(self, "point_obj", obj)
        object.__setattr__(self, "point_img", img)


@dataclass(frozen=True)
class RansacParams:
    max_iterations: int = 100
    inlier_threshold_px: float = 8.0
    min_inliers: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.inlier_threshold_px <= 0:
            raise ValueError("inlier_threshold_px must be > 0")
        if self.min_inliers < 4:
            raise ValueError("min_inliers must be >= 4")


@dataclass(frozen=True)
class PnPSolution:
    pose: RigidTransform
    converged: bool
    rms_px: float


def _stack(corrs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pts = np.array([c.point_obj for c in corrs])
    uv = np.array([c.point_img for c in corrs])
    w = np.array([c.confidence for c in corrs])
    return pts, uv, w


def _colinear(points: np.ndarray) -> bool:
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv[1] < 1e-9 * max(sv[0], 1e-12)


def reprojection_errors(
    pose: RigidTransform, points: np.ndarray, uv: np.ndarray, intr: CameraIntrinsics
) -> np.ndarray:
    """Per-point pixel distance between projection and observation.

    Points behind the camera get +inf.
    """
    cam = pose.apply(points)
    z = cam[:, 2]
    ok = z > 1e-6
    zs = np.where(ok, z, 1.0)
    u = intr.fx * cam[:, 0] / zs + intr.cx
    v = intr.fy * cam[:, 1] / zs + intr.cy
    err = np.hypot(u - uv[:, 0], v - uv[:, 1])
    err[~ok] = np.inf
    return err


def gauss_newton_pose(
    points: np.ndarray,
    uv: np.ndarray,
    weights: np.ndarray,
    intr: CameraIntrinsics,
    init: RigidTransform,
    max_iterations: int = 50,
    tolerance: float = 1e-10,
) -> tuple[RigidTransform, bool, float]:
    """Minimize the weighted reprojection residual over a 6-DoF pose.

    Left-multiplicative twist updates with step halving, so the cost is
    monotone non-increasing. Returns (pose, converged, cost). Shared by
    solve_pnp and the module tracker.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    uv = np.ascontiguousarray(uv, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    pose = init
    res, jac, n_active = kernels.reproj_residual_jacobian(
        points, uv, weights, pose.rotation, pose.translation,
        intr.fx, intr.fy, intr.cx, intr.cy,
    )
    if n_active < 3:
        return pose, False, float(res @ res)
    cost = float(res @ res)
    converged = False
    step_norm = np.inf
    for _ in range(max_iterations):
        h = jac.T @ jac + 1e-12 * np.eye(6)
        g = jac.T @ res
        try:
            step = np.linalg.solve(h, -g)
        except np.linalg.LinAlgError:
            break
        if not np.isfinite(step).all():
            break
        step_norm = float(np.linalg.norm(step))
        # Step halving keeps the cost monotone.
        improved = False
        for _ in range(12):
            candidate = compose(exp_twist(Twist.from_vector(step)), pose)
            c_res, c_jac, c_active = kernels.reproj_residual_jacobian(
                points, uv, weights, candidate.rotation, candidate.translation,
                intr.fx, intr.fy, intr.cx, intr.cy,
            )
            c_cost = float(c_res @ c_res)
            if c_cost <= cost and c_active >= 3:
                pose, res, jac, cost = candidate, c_res, c_jac, c_cost
                improved = True
                break
            step = step * 0.5
        if not improved:
            converged = step_norm < 1e-6
            break
        if step_norm < tolerance:
            converged = True
            break
    else:
        converged = step_norm < 1e-6
    return pose, converged, cost


def _epnp_bootstrap(points, uv, intr) -> RigidTransform:
    """Linear EPnP estimate used to seed Gauss-Newton when no init is given."""
    k = np.array(
        [[intr.fx, 0.0, intr.cx], [0.0, intr.fy, intr.cy], [0.0, 0.0, 1.0]]
    )
    ok, rvec, tvec = cv2.solvePnP(
        points.reshape(-1, 1, 3).astype(np.float64),
        uv.reshape(-1, 1, 2).astype(np.float64),
        k,
        None,
        flags=cv2.SOLVEPNP_EPNP,
    )
    if not ok:
        raise UnsolvableError("linear PnP bootstrap failed")
    rot, _ = cv2.Rodrigues(rvec)
    det = np.linalg.det(rot)
    if not np.isfinite(rot).all() or abs(det - 1.0) > 1e-6:
        raise UnsolvableError("linear PnP bootstrap returned an invalid rotation")
    return RigidTransform(rot, tvec.reshape(3))


def solve_pnp(
    corrs,
    intr: CameraIntrinsics,
    init: RigidTransform | None = None,
    max_iterations: int = 50,
    tolerance: float = 1e-12,
) -> PnPSolution:
    """Recover a pose from >= 4 correspondences.

    A linear EPnP estimate bootstraps Gauss-Newton when ``init`` is absent.
    Confidence weights multiply the residual rows, so zero-confidence
    points do not influence the fit. Raises UnsolvableError for < 4 usable
    correspondences or colinear 3D points; a non-converged refinement is
    returned as a best-effort pose with converged=False.
    """
    usable = [c for c in corrs if c.confidence > 0.0]
    if len(usable) < 4:
        raise UnsolvableError(
            f"need >= 4 correspondences with positive confidence, got {len(usable)}"
        )
    points, uv, weights = _stack(usable)
    if _colinear(points):
        raise UnsolvableError("3D points are colinear")

    pose0 = init if init is not None else _epnp_bootstrap(points, uv, intr)
    pose, converged, _ = gauss_newton_pose(
        points, uv, weights, intr, pose0, max_iterations, tolerance
    )
    errs = reprojection_errors(pose, points, uv, intr)
    if not np.isfinite(errs).all():
        converged = False
    rms = float(np.sqrt(np.mean(np.square(errs[np.isfinite(errs)]))) if np.isfinite(errs).any() else np.inf)
    return PnPSolution(pose=pose, converged=converged, rms_px=rms)


def ransac_pnp(
    corrs,
    intr: CameraIntrinsics,
    params: RansacParams = RansacParams(),
) -> tuple[RigidTransform, np.ndarray]:
    """Robust PnP: minimal 4-point hypotheses, inlier voting, inlier refit.

    Deterministic for a fixed ``params.seed`` and input order. Returns the
    refined pose and the inlier indices (into ``corrs``).
    """
    corrs = list(corrs)
    if len(corrs) < params.min_inliers:
        raise NoConsensusError(
            f"need >= {params.min_inliers} correspondences, got {len(corrs)}"
        )
    points, uv, _ = _stack(corrs)
    rng = np.random.default_rng(np.random.PCG64(params.seed))
    n = len(corrs)

    best_inliers = None
    best_count = 0
    best_err = np.inf
    needed = params.max_iterations
    it = 0
    while it < min(needed, params.max_iterations):
        it += 1
        sample = rng.choice(n, size=4, replace=False)
        sample_pts = points[sample]
        if _colinear(sample_pts):
            continue
        try:
            pose0 = _epnp_bootstrap(sample_pts, uv[sample], intr)
        except UnsolvableError:
            continue
        pose, _, _ = gauss_newton_pose(
            sample_pts, uv[sample], np.ones(4), intr, pose0, max_iterations=10
        )
        errs = reprojection_errors(pose, points, uv, intr)
        mask = errs < params.inlier_threshold_px
        count = int(mask.sum())
        mean_err = float(errs[mask].mean()) if count else np.inf
        if count > best_count or (count == best_count and mean_err < best_err):
            best_count = count
            best_err = mean_err
            best_inliers = mask
            if count >= 4:
                # Standard adaptive stopping at 99.9% confidence.
                ratio = count / n
                denom = np.log(max(1.0 - ratio**4, 1e-12))
                needed = int(min(np.ceil(np.log(1e-3) / denom), params.max_iterations)) if denom < 0 else params.max_iterations

    if best_inliers is None or best_count < params.min_inliers:
        raise NoConsensusError(
            f"best consensus {best_count} below min_inliers {params.min_inliers}"
        )

    inlier_idx = np.flatnonzero(best_inliers)
    refit = solve_pnp([corrs[i] for i in inlier_idx], intr)
    # Reclassify with the refined pose; keep the larger consensus.
    errs = reprojection_errors(refit.pose, points, uv, intr)
    final_mask = errs < params.inlier_threshold_px
    if int(final_mask.sum()) >= best_count:
        inlier_idx = np.flatnonzero(final_mask)
    return refit.pose, inlier_idx
