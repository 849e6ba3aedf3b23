"""Graph-based multi-object 6D pose tracking for assembly sequences."""

from .geom import RigidTransform, Twist, compose, invert
from .keypoints import CameraIntrinsics, ObjectModel, farthest_point_sample, project
from .pnp import Correspondence, RansacParams, ransac_pnp, solve_pnp
from .assembly_graph import AssemblyGraph, check_transition, load_graph, module_partition
from .metrics import add_error, adds_error, average_errors, score
from .tracker import TrackerConfig, TrackReport, initialize, run_sequence, update

__version__ = "0.1.0"

__all__ = [
    "RigidTransform",
    "Twist",
    "compose",
    "invert",
    "CameraIntrinsics",
    "ObjectModel",
    "farthest_point_sample",
    "project",
    "Correspondence",
    "RansacParams",
    "ransac_pnp",
    "solve_pnp",
    "AssemblyGraph",
    "check_transition",
    "load_graph",
    "module_partition",
    "add_error",
    "adds_error",
    "average_errors",
    "score",
    "TrackerConfig",
    "TrackReport",
    "initialize",
    "run_sequence",
    "update",
    "__version__",
]
