"""SE(3)/SO(3) primitives: rigid transforms, twists, and pose-error measures.

Conventions:
    * A pose maps object coordinates into camera coordinates,
      ``x_cam = R @ x_obj + t``.
    * Rotations are stored as 3x3 matrices; unit quaternions (w, x, y, z)
      appear only at I/O boundaries.
    * Twists are ordered (angular, linear).

All functions here are pure and operate on immutable values, so they are
safe to call from any thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Below this rotation angle the exp/log maps switch to Taylor expansions.
_SMALL_ANGLE = 1e-9

# log() rejects rotations closer than this to the 180 degree branch cut.
_PI_MARGIN = 1e-6


class DegenerateRotationError(ValueError):
    """Raised when log() is evaluated too close to a 180 degree rotation."""


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product (hat) matrix of a 3-vector."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


@dataclass(frozen=True)
class RigidTransform:
    """An SE(3) element: 3x3 rotation matrix plus translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64)
        trans = np.array(self.translation, dtype=np.float64).reshape(3)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > 1e-7 or not np.isfinite(trans).all():
            raise ValueError(f"rotation is not orthonormal (max deviation {err:.3e})")
        if abs(np.linalg.det(rot) - 1.0) > 1e-7:
            raise ValueError("rotation must have determinant +1")
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (n, 3) batch."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class Twist:
    """se(3) tangent vector: angular part in radians, linear part in meters."""

    angular: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        ang = np.array(self.angular, dtype=np.float64).reshape(3)
        lin = np.array(self.linear, dtype=np.float64).reshape(3)
        if not (np.isfinite(ang).all() and np.isfinite(lin).all()):
            raise ValueError("twist entries must be finite")
        ang.flags.writeable = False
        lin.flags.writeable = False
        object.__setattr__(self, "angular", ang)
        object.__setattr__(self, "linear", lin)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.angular, self.linear])

    @staticmethod
    def from_vector(v: np.ndarray) -> "Twist":
        v = np.asarray(v, dtype=np.float64).reshape(6)
        return Twist(angular=v[:3], linear=v[3:])


def identity() -> RigidTransform:
    return RigidTransform(np.eye(3), np.zeros(3))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """a ∘ b: apply b first, then a."""
    return RigidTransform(
        a.rotation @ b.rotation,
        a.rotation @ b.translation + a.translation,
    )


def invert(t: RigidTransform) -> RigidTransform:
    rot_inv = t.rotation.T
    return RigidTransform(rot_inv, -rot_inv @ t.translation)


def rotation_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rodrigues formula mapping a rotation vector to a rotation matrix."""
    omega = np.asarray(omega, dtype=np.float64).reshape(3)
    theta = np.linalg.norm(omega)
    w = skew(omega)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + w + 0.5 * (w @ w)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * w + b * (w @ w)


def so3_log(rot: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix (principal branch, angle < pi)."""
    rot = np.asarray(rot, dtype=np.float64)
    cos_theta = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    theta = math.acos(cos_theta)
    if theta > math.pi - _PI_MARGIN:
        raise DegenerateRotationError(
            f"rotation angle {math.degrees(theta):.4f} deg is too close to 180"
        )
    axis_raw = np.array(
        [rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]]
    )
    if theta < _SMALL_ANGLE:
        return 0.5 * axis_raw
    return (theta / (2.0 * math.sin(theta))) * axis_raw


def exp_twist(x: Twist) -> RigidTransform:
    """SE(3) exponential: twist -> rigid transform."""
    omega = x.angular
    theta = np.linalg.norm(omega)
    rot = so3_exp(omega)
    w = skew(omega)
    if theta < _SMALL_ANGLE:
        v_mat = np.eye(3) + 0.5 * w + (w @ w) / 6.0
    else:
        t2 = theta * theta
        v_mat = (
            np.eye(3)
            + ((1.0 - math.cos(theta)) / t2) * w
            + ((theta - math.sin(theta)) / (t2 * theta)) * (w @ w)
        )
    return RigidTransform(rot, v_mat @ x.linear)


def log_transform(t: RigidTransform) -> Twist:
    """SE(3) logarithm, inverse of exp_twist on the principal branch."""
    omega = so3_log(t.rotation)
    theta = np.linalg.norm(omega)
    w = skew(omega)
    if theta < _SMALL_ANGLE:
        v_inv = np.eye(3) - 0.5 * w + (w @ w) / 12.0
    else:
        half = 0.5 * theta
        coeff = (1.0 - half / math.tan(half)) / (theta * theta)
        v_inv = np.eye(3) - 0.5 * w + coeff * (w @ w)
    return Twist(angular=omega, linear=v_inv @ t.translation)


def translation_error(pred: np.ndarray, gt: np.ndarray) -> float:
    """Euclidean distance between two translations, in meters."""
    pred = np.asarray(pred, dtype=np.float64).reshape(3)
    gt = np.asarray(gt, dtype=np.float64).reshape(3)
    return float(np.linalg.norm(pred - gt))


def rotation_error_deg(pred: np.ndarray, gt: np.ndarray) -> float:
    """Absolute geodesic angle between two rotation matrices, in degrees.

    The arccos argument is clamped to [-1, 1]; without the clamp,
    floating-point drift yields NaN at exactly 0 and 180 degrees.
    """
    cos_theta = (np.trace(np.asarray(pred) @ np.asarray(gt).T) - 1.0) / 2.0
    return abs(math.degrees(math.acos(np.clip(cos_theta, -1.0, 1.0))))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) to rotation matrix.

    Raises ValueError if the quaternion norm deviates from 1 by more
    than 1e-6 (wire-format contract).
    """
    q = np.asarray(q, dtype=np.float64).reshape(4)
    norm = np.linalg.norm(q)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"quaternion norm {norm:.8f} is not 1 within 1e-6")
    w, x, y, z = q / norm
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(rot: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (w, x, y, z), w >= 0."""
    rot = np.asarray(rot, dtype=np.float64)
    trace = np.trace(rot)
    if trace > 0:
        s = math.sqrt(trace + 1.0) * 2.0
        q = np.array(
            [
                0.25 * s,
                (rot[2, 1] - rot[1, 2]) / s,
                (rot[0, 2] - rot[2, 0]) / s,
                (rot[1, 0] - rot[0, 1]) / s,
            ]
        )
    else:
        i = int(np.argmax(np.diag(rot)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(rot[i, i] - rot[j, j] - rot[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (rot[k, j] - rot[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (rot[j, i] + rot[i, j]) / s
        q[1 + k] = (rot[k, i] + rot[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def pose_to_tq(t: RigidTransform) -> tuple[list, list]:
    """Wire-format helper: pose -> (translation list, quaternion list)."""
    return list(map(float, t.translation)), list(map(float, matrix_to_quat(t.rotation)))


def pose_from_tq(t, q) -> RigidTransform:
    """Wire-format helper: (translation, quaternion) -> pose."""
    return RigidTransform(quat_to_matrix(np.asarray(q)), np.asarray(t, dtype=np.float64))
