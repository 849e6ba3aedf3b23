"""Graph-based tracking loop.

Per frame: partition the roster into rigid modules according to the active
assembly state, refine each module's single 6-DoF root pose by Gauss-Newton
on the confidence-weighted keypoint reprojection residual of all member
objects, evaluate the state-switch condition, and optionally re-initialize
drifting modules from the detector at a fixed period.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly_graph import (
    AssemblyGraph,
    check_transition,
    module_partition,
    slave_children,
)
from .geom import RigidTransform, translation_error
from .keypoints import CameraIntrinsics, ObjectModel
from .pnp import (
    Correspondence,
    NoConsensusError,
    RansacParams,
    UnsolvableError,
    gauss_newton_pose,
    ransac_pnp,
    reprojection_errors,
)


class InitializationFailedError(RuntimeError):
    """No object could be initialized from the given observations."""


class SequenceFailedError(RuntimeError):
    """Initialization never succeeded over the whole sequence."""


@dataclass(frozen=True)
class TrackerConfig:
    gn_max_iterations: int = 10
    gn_tolerance: float = 1e-6
    # Keypoints whose warm-start reprojection error exceeds this gate are
    # excluded from the module fit (outlier rejection; RANSAC is too costly
    # to run per frame).
    gn_gate_px: float = 30.0
    reinit_period: int = 10
    reinit_offset_m: float = 0.05
    reinit_enabled: bool = False
    transition_debounce: int = 1
    seed: int = 0
    ransac: RansacParams = field(default_factory=RansacParams)

    def __post_init__(self):
        if self.reinit_period < 1:
            raise ValueError("reinit_period must be >= 1")
        if self.reinit_offset_m <= 0:
            raise ValueError("reinit_offset_m must be > 0")
        if self.transition_debounce < 1:
            raise ValueError("transition_debounce must be >= 1")


@dataclass(frozen=True)
class TrackEvent:
    kind: str  # "transition" | "reinit" | "lost"
    object_id: str | None = None
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TrackReport:
    frame_index: int
    state_index: int
    poses: dict  # id -> RigidTransform
    module_roots: dict  # id -> root id
    runtime_ms: float
    events: tuple = ()


@dataclass(frozen=True)
class TrackerState:
    state_index: int
    poses: dict  # id -> RigidTransform (objects acquired so far)
    debounce: int = 0


def _ransac_seed(config_seed: int, frame_index: int, object_id: str) -> int:
    seq = np.random.SeedSequence(
        [config_seed, frame_index, zlib.crc32(object_id.encode("utf-8"))]
    )
    return int(seq.generate_state(1, np.uint64)[0])


def _correspondences(model: ObjectModel, obs) -> list[Correspondence]:
    if not obs.detected:
        return []
    return [
        Correspondence(p, uv, float(c))
        for p, uv, c in zip(model.keypoints, obs.keypoints_img, obs.confidences)
        if c > 0.0
    ]


def _detect_pose(model, obs, intr, config, frame_index) -> RigidTransform | None:
    corrs = _correspondences(model, obs)
    if len(corrs) < config.ransac.min_inliers:
        return None
    params = replace(config.ransac, seed=_ransac_seed(config.seed, frame_index, model.id))
    try:
        pose, _ = ransac_pnp(corrs, intr, params)
    except (NoConsensusError, UnsolvableError):
        return None
    return pose


def _gated_weights(pose, points, uv, weights, intr, gate_px):
    errs = reprojection_errors(pose, points, uv, intr)
    gated = np.where(errs > gate_px, 0.0, weights)
    return gated if int((gated > 0).sum()) >= 6 else weights


def _refine_module(points, uv, weights, intr, root_pose, config):
    """Gauss-Newton on the module root with a two-pass outlier gate.

    Gating uses the warm-start pose first; after refinement the gate is
    re-evaluated once, which recovers the case of a large inter-frame jump
    where the warm start misclassifies everything.
    """
    w1 = _gated_weights(root_pose, points, uv, weights, intr, config.gn_gate_px)
    pose, _, _ = gauss_newton_pose(
        points, uv, w1, intr, root_pose,
        max_iterations=config.gn_max_iterations, tolerance=config.gn_tolerance,
    )
    w2 = _gated_weights(pose, points, uv, weights, intr, config.gn_gate_px)
    if not np.array_equal(w2, w1):
        pose, _, _ = gauss_newton_pose(
            points, uv, w2, intr, pose,
            max_iterations=config.gn_max_iterations, tolerance=config.gn_tolerance,
        )
    return pose


def initialize(
    observations: dict,
    intr: CameraIntrinsics,
    models: dict[str, ObjectModel],
    config: TrackerConfig = TrackerConfig(),
    frame_index: int = 0,
) -> TrackerState:
    """Bootstrap poses via RANSAC-PnP per object; unsolved objects stay pending."""
    poses = {}
    for oid, model in models.items():
        obs = observations.get(oid)
        if obs is None:
            continue
        pose = _detect_pose(model, obs, intr, config, frame_index)
        if pose is not None:
            poses[oid] = pose
    if not poses:
        raise InitializationFailedError("no object could be initialized")
    return TrackerState(state_index=0, poses=poses)


def update(
    state: TrackerState,
    observations: dict,
    intr: CameraIntrinsics,
    models: dict[str, ObjectModel],
    graph: AssemblyGraph,
    config: TrackerConfig,
    frame_index: int,
) -> tuple[TrackerState, TrackReport]:
    """One tracking step; returns the new state and an immutable report."""
    t0 = time.perf_counter()
    events = []
    poses = dict(state.poses)
    state_index = state.state_index
    debounce = state.debounce

    # Late acquisition of objects that never got a pose (initialization retry).
    for oid, model in models.items():
        if oid in poses:
            continue
        obs = observations.get(oid)
        if obs is None:
            continue
        pose = _detect_pose(model, obs, intr, config, frame_index)
        if pose is not None:
            poses[oid] = pose
        else:
            events.append(TrackEvent(kind="lost", object_id=oid))

    modules = module_partition(graph, state_index)
    module_roots = {}
    for module in modules:
        for oid, _ in module.members:
            module_roots[oid] = module.root_id
        root_pose = poses.get(module.root_id)
        if root_pose is None:
            continue
        points, uv, weights = [], [], []
        for oid, xf in module.members:
            obs = observations.get(oid)
            model = models.get(oid)
            if obs is None or model is None or not obs.detected:
                continue
            mask = obs.confidences > 0.0
            if not mask.any():
                continue
            points.append(xf.apply(model.keypoints[mask]))
            uv.append(obs.keypoints_img[mask])
            weights.append(obs.confidences[mask])
        if points:
            root_pose = _refine_module(
                np.concatenate(points),
                np.concatenate(uv),
                np.concatenate(weights),
                intr,
                root_pose,
                config,
            )
        else:
            events.append(TrackEvent(kind="lost", object_id=module.root_id))
        poses[module.root_id] = root_pose
    # Members are rigid: children are composed from their parent along the
    # link chain (exact, no per-member drift).
    slave_children(poses, graph.states[state_index])

    # State switching (forward-only, debounced).
    nxt = check_transition(graph, state_index, poses)
    if nxt is not None:
        debounce += 1
        if debounce >= config.transition_debounce:
            events.append(
                TrackEvent(kind="transition", detail={"from": state_index, "to": nxt})
            )
            state_index = nxt
            debounce = 0
            modules = module_partition(graph, state_index)
            module_roots = {
                oid: m.root_id for m in modules for oid, _ in m.members
            }
            slave_children(poses, graph.states[state_index])
    else:
        debounce = 0

    # Periodic re-initialization from the detector.
    if config.reinit_enabled and frame_index > 0 and frame_index % config.reinit_period == 0:
        for module in modules:
            tracked = poses.get(module.root_id)
            if tracked is None:
                continue
            obs = observations.get(module.root_id)
            model = models.get(module.root_id)
            if obs is None or model is None:
                continue
            detected = _detect_pose(model, obs, intr, config, frame_index)
            if detected is None:
                continue
            offset = translation_error(detected.translation, tracked.translation)
            if offset > config.reinit_offset_m:
                poses[module.root_id] = detected
                slave_children(poses, graph.states[state_index])
                events.append(
                    TrackEvent(
                        kind="reinit",
                        object_id=module.root_id,
                        detail={"offset_m": offset, "frame": frame_index},
                    )
                )

    runtime_ms = (time.perf_counter() - t0) * 1000.0
    report = TrackReport(
        frame_index=frame_index,
        state_index=state_index,
        poses=dict(poses),
        module_roots=module_roots,
        runtime_ms=runtime_ms,
        events=tuple(events),
    )
    return TrackerState(state_index=state_index, poses=poses, debounce=debounce), report


def run_sequence(
    frames,
    graph: AssemblyGraph,
    models: dict[str, ObjectModel],
    intr: CameraIntrinsics,
    config: TrackerConfig = TrackerConfig(),
    on_report=None,
) -> list[TrackReport]:
    """Track a whole sequence of per-frame observation dicts.

    Initialization is attempted on the first frame and retried on later
    frames until it first succeeds; tracking then folds ``update`` over the
    remaining frames. ``on_report`` (if given) is called with each report,
    e.g. to publish it over the pose API.
    """
    frames = list(frames)
    if not frames:
        raise SequenceFailedError("empty sequence")

    state = None
    reports = []
    for frame_index, observations in enumerate(frames):
        if state is None:
            t0 = time.perf_counter()
            try:
                state = initialize(observations, intr, models, config, frame_index)
            except InitializationFailedError:
                continue
            runtime_ms = (time.perf_counter() - t0) * 1000.0
            lost = tuple(
                TrackEvent(kind="lost", object_id=oid)
                for oid in models
                if oid not in state.poses
            )
            modules = module_partition(graph, state.state_index)
            roots = {oid: m.root_id for m in modules for oid, _ in m.members}
            report = TrackReport(
                frame_index=frame_index,
                state_index=state.state_index,
                poses=dict(state.poses),
                module_roots=roots,
                runtime_ms=runtime_ms,
                events=lost,
            )
        else:
            state, report = update(
                state, observations, intr, models, graph, config, frame_index
            )
        reports.append(report)
        if on_report is not None:
            on_report(report)

    if state is None:
        raise SequenceFailedError("initialization never succeeded")
    return reports
