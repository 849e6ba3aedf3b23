"""Synthetic assembly sequences: ground-truth trajectories and observations.

Sequences mirror the benchmark protocol: a fixed camera, parts that move
along waypoint trajectories, scripted assembly events after which a child
part is rigidly slaved to its parent, and optional occlusion windows.
Real assembly meshes are replaced by primitive stand-ins with matching
part counts and symmetry flags.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import assembly_graph as ag
from .detector_sim import Observation, condition_profile, simulate_observation
from .geom import (
    RigidTransform,
    compose,
    identity,
    pose_from_tq,
    pose_to_tq,
    so3_exp,
    so3_log,
    rotation_z,
)
from .keypoints import CameraIntrinsics, ObjectModel

ASSET_NAMES = (
    "hobby_corner_clamp",
    "geared_caliper",
    "nano_chuck",
    "hand_screw_clamp",
    "liftpod",
)


class ScriptError(ValueError):
    """Invalid sequence script (bad frames, unordered events, ...)."""


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=600.0, fy=600.0, cx=640.0, cy=360.0, width=1280, height=720)


@dataclass(frozen=True)
class SequenceScript:
    asset: str
    n_frames: int
    trajectories: dict  # id -> list of (frame, RigidTransform), sorted by frame
    assembly_events: tuple  # ((frame, state_index), ...), strictly increasing
    occlusion_windows: tuple = ()  # ((object_id, start, end) inclusive, ...)
    condition: str = "normal"
    seed: int = 0

    def __post_init__(self):
        if self.n_frames < 1:
            raise ScriptError("n_frames must be >= 1")
        for oid, wps in self.trajectories.items():
            frames = [f for f, _ in wps]
            if frames != sorted(frames):
                raise ScriptError(f"waypoints for {oid!r} are not sorted")
            if frames and (frames[0] < 0 or frames[-1] >= self.n_frames):
                raise ScriptError(f"waypoint frame out of range for {oid!r}")
        prev_f, prev_s = -1, 0
        for f, s in self.assembly_events:
            if f <= prev_f or s <= prev_s:
                raise ScriptError("assembly events must increase in frame and state")
            if not 0 <= f < self.n_frames:
                raise ScriptError(f"assembly event frame {f} out of range")
            prev_f, prev_s = f, s


@dataclass(frozen=True)
class GroundTruthFrame:
    frame_index: int
    poses: dict  # id -> RigidTransform


def interpolate_pose(waypoints, frame: int) -> RigidTransform:
    """Piecewise interpolation: linear translation, constant angular velocity."""
    if not waypoints:
        raise ScriptError("empty trajectory")
    if frame <= waypoints[0][0]:
        return waypoints[0][1]
    if frame >= waypoints[-1][0]:
        return waypoints[-1][1]
    for (f0, p0), (f1, p1) in zip(waypoints, waypoints[1:]):
        if f0 <= frame <= f1:
            s = (frame - f0) / (f1 - f0)
            t = (1.0 - s) * p0.translation + s * p1.translation
            rel = p0.rotation.T @ p1.rotation
            rot = p0.rotation @ so3_exp(s * so3_log(rel))
            return RigidTransform(rot, t)
    raise ScriptError("frame not covered by waypoints")  # pragma: no cover


def generate_ground_truth(script: SequenceScript, graph: ag.AssemblyGraph) -> list[GroundTruthFrame]:
    """Interpolate trajectories and slave assembled children to their parents.

    From each assembly event's frame onward, the links of the reached state
    override the child trajectories: child pose = parent pose o link relative,
    exactly, so relative-pose equality holds by construction.
    """
    frames = []
    for f in range(script.n_frames):
        achieved = 0
        for ef, es in script.assembly_events:
            if f >= ef:
                achieved = es
        poses = {
            oid: interpolate_pose(wps, f) for oid, wps in script.trajectories.items()
        }
        ag.slave_children(poses, graph.states[achieved])
        frames.append(GroundTruthFrame(frame_index=f, poses=poses))
    return frames


def generate_observations(
    gt_frames,
    models: dict[str, ObjectModel],
    intr: CameraIntrinsics,
    condition: str,
    seed: int,
    occlusion_windows=(),
) -> list[dict[str, Observation]]:
    """Simulate detector output for every frame and object.

    During an occlusion window (inclusive bounds) the object's dropout
    probability is forced to 1.
    """
    profile = condition_profile(condition, seed=seed)
    out = []
    for gt in gt_frames:
        frame_obs = {}
        for oid, model in models.items():
            occluded = any(
                oid == wid and start <= gt.frame_index <= end
                for wid, start, end in occlusion_windows
            )
            frame_obs[oid] = simulate_observation(
                model, gt.poses[oid], intr, profile, gt.frame_index, force_dropout=occluded
            )
        out.append(frame_obs)
    return out


# ---------------------------------------------------------------------------
# Built-in assets
# ---------------------------------------------------------------------------

# (part id, symmetric) rosters; the first chain entry is the base part.
_ASSETS = {
    "hobby_corner_clamp": {
        "parts": [("clamp_base", False), ("clamp_bolt", True), ("clamp_jaw", False)],
        # Assembly order: jaw onto base, then bolt onto jaw (a chain).
        "chain": [("clamp_base", "clamp_jaw"), ("clamp_jaw", "clamp_bolt")],
        "base": "clamp_base",
    },
    "geared_caliper": {
        "parts": [("fix", False), ("move_bottom", False), ("move_top_vernier", False)],
        "chain": [("fix", "move_bottom"), ("fix", "move_top_vernier")],
        "base": "fix",
    },
    "nano_chuck": {
        "parts": [
            ("balljoint", True),
            ("base", False),
            ("headplate", True),
            ("nut", True),
            ("screw", True),
            ("vise_base", False),
            ("vise_screw", True),
            ("vise_slider", False),
        ],
        "chain": [
            ("base", "balljoint"),
            ("base", "headplate"),
            ("base", "nut"),
            ("base", "screw"),
            ("base", "vise_base"),
            ("vise_base", "vise_screw"),
            ("vise_base", "vise_slider"),
        ],
        "base": "base",
    },
    "hand_screw_clamp": {
        "parts": [
            ("jaw_1", False),
            ("jaw_2", False),
            ("knob_1", True),
            ("knob_2", True),
            ("pad", False),
            ("thread_1", True),
            ("thread_2", True),
        ],
        "chain": [
            ("jaw_1", "jaw_2"),
            ("jaw_1", "thread_1"),
            ("jaw_1", "thread_2"),
            ("thread_1", "knob_1"),
            ("thread_2", "knob_2"),
            ("jaw_2", "pad"),
        ],
        "base": "jaw_1",
    },
    "liftpod": {
        "parts": [
            ("arm_first", True),
            ("arm_last", True),
            ("bar", True),
            ("base_plate", True),
            ("clamp_frame", False),
            ("clamp_slider", False),
            ("sleeve", True),
        ],
        "chain": [
            ("base_plate", "arm_first"),
            ("arm_first", "arm_last"),
            ("arm_last", "bar"),
            ("base_plate", "clamp_frame"),
            ("clamp_frame", "clamp_slider"),
            ("bar", "sleeve"),
        ],
        "base": "base_plate",
    },
}


def _ellipsoid_mesh(rx: float, ry: float, rz: float, rings: int = 6, segments: int = 10):
    """Lat-long ellipsoid: rings*segments + 2 vertices, triangulated."""
    verts = [(0.0, 0.0, rz)]
    for i in range(1, rings + 1):
        phi = math.pi * i / (rings + 1)
        for j in range(segments):
            theta = 2.0 * math.pi * j / segments
            verts.append(
                (
                    rx * math.sin(phi) * math.cos(theta),
                    ry * math.sin(phi) * math.sin(theta),
                    rz * math.cos(phi),
                )
            )
    verts.append((0.0, 0.0, -rz))
    faces = []
    for j in range(segments):
        faces.append((0, 1 + j, 1 + (j + 1) % segments))
    for i in range(rings - 1):
        a = 1 + i * segments
        b = a + segments
        for j in range(segments):
            j2 = (j + 1) % segments
            faces.append((a + j, b + j, b + j2))
            faces.append((a + j, b + j2, a + j2))
    last = len(verts) - 1
    a = 1 + (rings - 1) * segments
    for j in range(segments):
        faces.append((last, a + (j + 1) % segments, a + j))
    return np.array(verts), faces


def _part_model(asset: str, part_id: str, symmetric: bool, index: int) -> ObjectModel:
    rng = np.random.default_rng(
        np.random.SeedSequence([zlib.crc32(asset.encode()), zlib.crc32(part_id.encode())])
    )
    base_r = 0.05 if index == 0 else 0.028 + 0.012 * float(rng.random())
    rx = base_r * (1.0 + 0.3 * float(rng.random()))
    ry = rx if symmetric else base_r * (0.6 + 0.3 * float(rng.random()))
    rz = base_r * (0.7 + 0.6 * float(rng.random()))
    verts, faces = _ellipsoid_mesh(rx, ry, rz)
    return ObjectModel(id=part_id, vertices=verts, faces=faces, symmetric=symmetric)


def _link_relative(k: int, n: int) -> RigidTransform:
    """Distinct, deterministic attachment pose for the k-th assembly step."""
    angle = 2.0 * math.pi * k / max(n, 2)
    radius = 0.085
    t = np.array([radius * math.cos(angle), radius * math.sin(angle), 0.015 * (k % 3)])
    return RigidTransform(rotation_z(0.35 * k), t)


def builtin_asset(
    name: str, n_frames: int = 120, condition: str = "normal", seed: int = 7
) -> tuple[dict[str, ObjectModel], ag.AssemblyGraph, SequenceScript]:
    """Models, assembly graph and a default script for a built-in asset.

    The default script moves the base along a smooth trajectory the whole
    sequence, brings each child to its attachment pose at evenly spaced
    event frames, and (for the hand condition) occludes each child for 30
    frames right after it is assembled.
    """
    if name not in _ASSETS:
        raise ValueError(f"unknown asset {name!r}; expected one of {ASSET_NAMES}")
    spec = _ASSETS[name]
    parts = spec["parts"]
    models = {
        pid: _part_model(name, pid, sym, i) for i, (pid, sym) in enumerate(parts)
    }

    chain = spec["chain"]
    n_states = len(parts)
    relatives = {child: _link_relative(k + 1, n_states) for k, (_, child) in enumerate(chain)}

    states = []
    for s in range(n_states):
        links = tuple(
            ag.KinematicLink(parent, child, relatives[child])
            for parent, child in chain[:s]
        )
        switch = None
        if s < n_states - 1:
            parent, child = chain[s]
            switch = ag.SwitchCondition(parent, child, relatives[child])
        states.append(
            ag.AssemblyState(index=s, base_id=spec["base"], links=links, switch_pair=switch)
        )
    graph = ag.AssemblyGraph(
        objects=tuple(pid for pid, _ in parts),
        states=tuple(states),
        meshes={pid: f"builtin://{name}/{pid}" for pid, _ in parts},
        symmetric={pid: sym for pid, sym in parts},
    )

    script = _default_script(name, graph, chain, relatives, n_frames, condition, seed)
    return models, graph, script


def _chain_offset(chain, relatives, child: str, base: str) -> RigidTransform:
    """Compose link relatives along the tree path base -> child."""
    parents = {c: p for p, c in chain}
    path = []
    node = child
    while node != base:
        path.append(node)
        node = parents[node]
    xf = identity()
    for n in reversed(path):
        xf = compose(xf, relatives[n])
    return xf


def _default_script(name, graph, chain, relatives, n_frames, condition, seed):
    base_id = graph.states[0].base_id
    rng = np.random.default_rng(
        np.random.SeedSequence([seed, zlib.crc32(name.encode()), 1])
    )
    n_states = len(graph.states)

    # Base keeps moving the whole sequence: zigzag sweep plus rotation, so
    # a tracker that loses an object really drifts away from it.
    wp_frames = sorted({0, n_frames // 4, n_frames // 2, 3 * n_frames // 4, n_frames - 1})
    xs = (-0.13, 0.11, -0.11, 0.13, -0.13)
    ys = (-0.06, 0.05, -0.05, 0.06, -0.06)
    zs = (0.70, 0.80, 0.68, 0.80, 0.70)
    base_wps = []
    rot = np.eye(3)
    for i, f in enumerate(wp_frames):
        t = np.array(
            [
                xs[i % 5] + 0.02 * float(rng.standard_normal()),
                ys[i % 5] + 0.01 * float(rng.standard_normal()),
                zs[i % 5] + 0.02 * float(rng.standard_normal()),
            ]
        )
        if i > 0:
            rot = rot @ so3_exp(rng.uniform(-0.35, 0.35, size=3))
        base_wps.append((f, RigidTransform(rot, t)))

    trajectories = {base_id: base_wps}
    events = []
    event_frames = {}
    for k in range(1, n_states):
        ef = (n_frames * k) // n_states
        events.append((ef, k))
        event_frames[chain[k - 1][1]] = ef

    # Children start spread out and reach their attachment pose at the event.
    for k, (_, child) in enumerate(chain):
        ef = event_frames[child]
        angle = 2.0 * math.pi * (k + 0.5) / max(len(chain), 2)
        start_t = np.array(
            [0.20 * math.cos(angle), 0.13 * math.sin(angle), 0.72 + 0.02 * (k % 3)]
        )
        start = RigidTransform(so3_exp(rng.uniform(-0.4, 0.4, size=3)), start_t)
        base_at_event = interpolate_pose(base_wps, ef)
        target = compose(base_at_event, _chain_offset(chain, relatives, child, base_id))
        # Hover outside the switch thresholds until one frame before the
        # event, so the transition fires at the scripted frame rather than
        # during a slow final approach.
        hover = compose(target, RigidTransform(rotation_z(0.42), np.array([0.06, 0.0, 0.0])))
        wps = [(0, start)]
        if ef > 1:
            wps.append((ef - 1, hover))
        if ef > 0:
            wps.append((ef, target))
        else:
            wps = [(0, target)]
        trajectories[child] = wps

    occlusions = []
    if condition == "hand":
        for child, ef in event_frames.items():
            start = min(ef + 3, n_frames - 1)
            occlusions.append((child, start, min(ef + 33, n_frames - 1)))

    return SequenceScript(
        asset=name,
        n_frames=n_frames,
        trajectories=trajectories,
        assembly_events=tuple(events),
        occlusion_windows=tuple(occlusions),
        condition=condition,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Script (de)serialization
# ---------------------------------------------------------------------------


def script_to_dict(script: SequenceScript) -> dict:
    return {
        "asset": script.asset,
        "n_frames": script.n_frames,
        "condition": script.condition,
        "seed": script.seed,
        "trajectories": {
            oid: [
                {"frame": f, "t": pose_to_tq(p)[0], "q": pose_to_tq(p)[1]}
                for f, p in wps
            ]
            for oid, wps in script.trajectories.items()
        },
        "events": [{"frame": f, "state": s} for f, s in script.assembly_events],
        "occlusions": [
            {"id": oid, "start": s, "end": e} for oid, s, e in script.occlusion_windows
        ],
    }


def script_from_dict(d: dict) -> SequenceScript:
    return SequenceScript(
        asset=d["asset"],
        n_frames=int(d["n_frames"]),
        condition=d.get("condition", "normal"),
        seed=int(d.get("seed", 0)),
        trajectories={
            oid: [(int(w["frame"]), pose_from_tq(w["t"], w["q"])) for w in wps]
            for oid, wps in d["trajectories"].items()
        },
        assembly_events=tuple((int(e["frame"]), int(e["state"])) for e in d.get("events", [])),
        occlusion_windows=tuple(
            (o["id"], int(o["start"]), int(o["end"])) for o in d.get("occlusions", [])
        ),
    )
