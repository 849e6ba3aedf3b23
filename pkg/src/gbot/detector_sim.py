"""Simulated keypoint detector.

Stands in for a learned detector with the same output contract: per frame
and per object, N 2D keypoints with confidences plus a detected flag.
Degradation (pixel noise, whole-detection dropout, keypoint outliers) is
controlled by a NoiseProfile and is deterministic per
(seed, frame_index, object_id).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .geom import RigidTransform
from .keypoints import CameraIntrinsics, ObjectModel, project

# Confidence model: residual-based falloff with this pixel scale, floored
# at 0.2 for visible points; outliers are pinned to 0.1.
_CONF_SCALE_PX = 8.0
_OUTLIER_CONF = 0.1

CONDITION_NAMES = ("normal", "dynamic", "blur", "hand")


@dataclass(frozen=True)
class NoiseProfile:
    pixel_sigma: float = 0.0
    dropout_prob: float = 0.0
    keypoint_outlier_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.pixel_sigma < 0:
            raise ValueError("pixel_sigma must be >= 0")
        for name in ("dropout_prob", "keypoint_outlier_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass(frozen=True)
class Observation:
    object_id: str
    frame_index: int
    detected: bool
    keypoints_img: np.ndarray  # (N, 2) pixels; empty when not detected
    confidences: np.ndarray  # (N,) in [0, 1]


def condition_profile(name: str, seed: int = 0) -> NoiseProfile:
    """Noise profile for one of the four test conditions."""
    table = {
        "normal": dict(pixel_sigma=1.0, dropout_prob=0.02, keypoint_outlier_prob=0.02),
        "dynamic": dict(pixel_sigma=2.0, dropout_prob=0.10, keypoint_outlier_prob=0.05),
        "blur": dict(pixel_sigma=4.0, dropout_prob=0.05, keypoint_outlier_prob=0.05),
        "hand": dict(pixel_sigma=1.5, dropout_prob=0.35, keypoint_outlier_prob=0.10),
    }
    if name not in table:
        raise ValueError(f"unknown condition {name!r}; expected one of {CONDITION_NAMES}")
    return NoiseProfile(seed=seed, **table[name])


def _rng_for(seed: int, frame_index: int, object_id: str) -> np.random.Generator:
    oid_hash = zlib.crc32(object_id.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed, frame_index, oid_hash]))


def simulate_observation(
    model: ObjectModel,
    gt_pose: RigidTransform,
    intr: CameraIntrinsics,
    profile: NoiseProfile,
    frame_index: int,
    force_dropout: bool = False,
) -> Observation:
    """Project the model keypoints and degrade them per the profile.

    Draw order is fixed (dropout, noise, outliers) so output is bit-stable
    per (seed, frame_index, object_id). ``force_dropout`` implements
    scripted occlusion windows.
    """
    rng = _rng_for(profile.seed, frame_index, model.id)
    dropout_draw = rng.random()
    if force_dropout or dropout_draw < profile.dropout_prob:
        return Observation(
            object_id=model.id,
            frame_index=frame_index,
            detected=False,
            keypoints_img=np.empty((0, 2)),
            confidences=np.empty(0),
        )

    exact, visible = project(intr, gt_pose, model.keypoints)
    n = len(exact)
    noise = rng.normal(0.0, profile.pixel_sigma, size=(n, 2)) if profile.pixel_sigma > 0 else np.zeros((n, 2))
    outlier_draws = rng.random(n)
    outlier_px = np.stack(
        [rng.uniform(0, intr.width, n), rng.uniform(0, intr.height, n)], axis=1
    )

    keypoints = np.where(np.isfinite(exact), exact, 0.0) + noise
    residual = np.linalg.norm(noise, axis=1)
    conf = np.maximum(0.2, 1.0 - residual / _CONF_SCALE_PX)

    is_outlier = outlier_draws < profile.keypoint_outlier_prob
    keypoints[is_outlier] = outlier_px[is_outlier]
    conf[is_outlier] = _OUTLIER_CONF
    conf[~visible] = 0.0

    return Observation(
        object_id=model.id,
        frame_index=frame_index,
        detected=True,
        keypoints_img=keypoints,
        confidences=conf,
    )
