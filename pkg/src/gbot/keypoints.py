"""Object models, farthest-point keypoint selection and pinhole projection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geom import RigidTransform

DEFAULT_NUM_KEYPOINTS = 17
MIN_KEYPOINTS = 4
MAX_KEYPOINTS = 24


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int = 1280
    height: int = 720

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("resolution must be positive")


@dataclass(frozen=True)
class ObjectModel:
    """A rigid part: mesh vertices (meters, object frame), faces, keypoints."""

    id: str
    vertices: np.ndarray
    faces: list = field(default_factory=list)
    keypoint_indices: np.ndarray = None
    symmetric: bool = False

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        if len(verts) < 4:
            raise ValueError("object model needs at least 4 vertices")
        object.__setattr__(self, "vertices", verts)
        if self.keypoint_indices is None:
            kp = farthest_point_sample(verts, min(DEFAULT_NUM_KEYPOINTS, len(verts)))
        else:
            kp = np.asarray(self.keypoint_indices, dtype=np.int64).reshape(-1)
        if len(set(kp.tolist())) != len(kp):
            raise ValueError("keypoint indices must be distinct")
        if kp.min() < 0 or kp.max() >= len(verts):
            raise ValueError("keypoint index out of range")
        object.__setattr__(self, "keypoint_indices", kp)

    @property
    def keypoints(self) -> np.ndarray:
        """(N, 3) selected keypoint coordinates in the object frame."""
        return self.vertices[self.keypoint_indices]


def farthest_point_sample(vertices: np.ndarray, n: int) -> np.ndarray:
    """Greedy max-min farthest point sampling.

    Seeds with the vertex farthest from the vertex centroid (ties broken
    by lowest index), then repeatedly adds the vertex maximizing its
    minimum distance to the selected set. Deterministic for fixed input.
    """
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    if n < 1 or n > len(vertices):
        raise ValueError(f"cannot sample {n} keypoints from {len(vertices)} vertices")
    centroid = vertices.mean(axis=0)
    seed = int(np.argmax(np.linalg.norm(vertices - centroid, axis=1)))
    return np.asarray(kernels.fps(vertices, n, seed), dtype=np.int64)


def project(
    intr: CameraIntrinsics, pose: RigidTransform, points_obj: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Project object-frame points through the camera.

    Returns (pixels (n, 2), visible (n,)). A point is visible when it is
    in front of the camera (z > 1e-6) and its pixel lies inside the image.
    Points behind the camera get pixel (nan, nan).
    """
    pts = np.asarray(points_obj, dtype=np.float64).reshape(-1, 3)
    cam = pose.apply(pts)
    z = cam[:, 2]
    in_front = z > 1e-6
    zs = np.where(in_front, z, 1.0)
    u = intr.fx * cam[:, 0] / zs + intr.cx
    v = intr.fy * cam[:, 1] / zs + intr.cy
    pix = np.stack([u, v], axis=1)
    pix[~in_front] = np.nan
    visible = (
        in_front
        & (u >= 0.0)
        & (u < intr.width)
        & (v >= 0.0)
        & (v < intr.height)
    )
    return pix, visible


def load_obj(text: str, object_id: str, symmetric: bool = False, n_keypoints: int = DEFAULT_NUM_KEYPOINTS) -> ObjectModel:
    """Parse an ASCII OBJ subset: only `v x y z` and `f i j k` lines.

    Other line types are ignored. Face indices are 1-based. Units: meters.
    """
    verts = []
    faces = []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v" and len(parts) >= 4:
            verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
        elif parts[0] == "f" and len(parts) >= 4:
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:4]]
            faces.append(tuple(idx))
    if len(verts) < 4:
        raise ValueError(f"OBJ for {object_id!r} has only {len(verts)} vertices")
    vertices = np.array(verts)
    if not (MIN_KEYPOINTS <= n_keypoints <= MAX_KEYPOINTS):
        raise ValueError(f"n_keypoints must be in [{MIN_KEYPOINTS}, {MAX_KEYPOINTS}]")
    n_kp = min(n_keypoints, len(vertices))
    return ObjectModel(
        id=object_id,
        vertices=vertices,
        faces=faces,
        keypoint_indices=farthest_point_sample(vertices, n_kp),
        symmetric=symmetric,
    )
