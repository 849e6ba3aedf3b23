"""Pose evaluation metrics: ADD, ADD-S, thresholded score, average errors."""

from __future__ import annotations

import numpy as np

from . import kernels
from .geom import RigidTransform, rotation_error_deg, translation_error

DEFAULT_SCORE_THRESHOLD_M = 0.10


def add_error(pred: RigidTransform, gt: RigidTransform, vertices: np.ndarray) -> float:
    """Mean distance between corresponding model points under both poses."""
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    if len(vertices) < 1:
        raise ValueError("need at least one vertex")
    diff = pred.apply(vertices) - gt.apply(vertices)
    return float(np.linalg.norm(diff, axis=1).mean())


def adds_error(pred: RigidTransform, gt: RigidTransform, vertices: np.ndarray) -> float:
    """Symmetric variant: mean closest-point distance between the two point sets."""
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    if len(vertices) < 1:
        raise ValueError("need at least one vertex")
    pred_pts = np.ascontiguousarray(pred.apply(vertices))
    gt_pts = np.ascontiguousarray(gt.apply(vertices))
    return float(kernels.adds_min_mean(pred_pts, gt_pts))


def score(errors, threshold: float = DEFAULT_SCORE_THRESHOLD_M) -> float:
    """Mean over frames of max(1 - e/threshold, 0), in [0, 1]."""
    errors = np.asarray(list(errors), dtype=np.float64)
    if errors.size == 0:
        raise ValueError("score of an empty error list is undefined")
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    return float(np.maximum(1.0 - errors / threshold, 0.0).mean())


def average_errors(entries) -> tuple[float, float]:
    """Arithmetic mean translation (m) and rotation (deg) errors.

    ``entries`` is a sequence of (e_trans, e_rot) pairs; pass e_rot=None
    for symmetric objects, which are excluded from the rotation mean.
    Returns (mean_trans_m, mean_rot_deg); the rotation mean is nan when
    every entry is symmetric.
    """
    entries = list(entries)
    if not entries:
        raise ValueError("average of an empty error list is undefined")
    trans = [e for e, _ in entries]
    rots = [r for _, r in entries if r is not None]
    mean_rot = float(np.mean(rots)) if rots else float("nan")
    return float(np.mean(trans)), mean_rot


def pose_errors(
    pred: RigidTransform, gt: RigidTransform, vertices: np.ndarray, symmetric: bool
) -> tuple[float, float, float | None]:
    """(add_or_adds, e_trans, e_rot) for one object; e_rot None if symmetric."""
    dist = adds_error(pred, gt, vertices) if symmetric else add_error(pred, gt, vertices)
    e_trans = translation_error(pred.translation, gt.translation)
    e_rot = None if symmetric else rotation_error_deg(pred.rotation, gt.rotation)
    return dist, e_trans, e_rot


def evaluate_sequence(
    reports,
    gt_frames,
    models,
    threshold: float = DEFAULT_SCORE_THRESHOLD_M,
    frame_range: tuple[int, int] | None = None,
) -> dict:
    """Aggregate metrics over a tracked sequence.

    Each report contributes one (frame, object) error per roster object.
    Objects without a tracked pose in a report score zero for that frame
    and are excluded from the translation/rotation means. Score is
    reported on the 0-100 scale used in benchmark tables.
    """
    gt_by_frame = {g.frame_index: g for g in gt_frames}
    dist_errors = []
    avg_entries = []
    for report in reports:
        if frame_range is not None and not (frame_range[0] <= report.frame_index < frame_range[1]):
            continue
        gt = gt_by_frame[report.frame_index]
        for oid, model in models.items():
            pred = report.poses.get(oid)
            if pred is None:
                dist_errors.append(np.inf)
                continue
            dist, e_trans, e_rot = pose_errors(pred, gt.poses[oid], model.vertices, model.symmetric)
            dist_errors.append(dist)
            avg_entries.append((e_trans, e_rot))
    if not dist_errors:
        raise ValueError("no overlapping frames to evaluate")
    mean_trans, mean_rot = average_errors(avg_entries) if avg_entries else (float("nan"), float("nan"))
    return {
        "add_s_score": 100.0 * score(dist_errors, threshold),
        "e_trans_cm": 100.0 * mean_trans,
        "e_rot_deg": mean_rot,
        "n_object_frames": len(dist_errors),
    }
