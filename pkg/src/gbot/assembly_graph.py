"""Multi-state assembly graphs: kinematic links, modules, state switching.

A graph is an ordered list of assembly states. Each state carries a set of
kinematic links (child rigidly attached to parent) and, except for the
terminal state, a switch condition: a pair of parts plus the relative pose
they must reach for the assembly step to count as finished.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .geom import (
    RigidTransform,
    identity,
    compose,
    invert,
    pose_from_tq,
    rotation_error_deg,
    translation_error,
)

DEFAULT_TRANS_THRESHOLD_M = 0.03
DEFAULT_ROT_THRESHOLD_DEG = 10.0


class GraphConfigError(ValueError):
    """Schema violation in a graph config; the message names the field."""


@dataclass(frozen=True)
class KinematicLink:
    parent_id: str
    child_id: str
    relative: RigidTransform  # pose of child expressed in the parent frame

    def __post_init__(self):
        if self.parent_id == self.child_id:
            raise GraphConfigError(f"link child equals parent: {self.child_id!r}")


@dataclass(frozen=True)
class SwitchCondition:
    a_id: str
    b_id: str
    expected_relative: RigidTransform  # pose of b in a's frame when assembled


@dataclass(frozen=True)
class AssemblyState:
    index: int
    base_id: str
    links: tuple[KinematicLink, ...] = ()
    switch_pair: SwitchCondition | None = None


@dataclass(frozen=True)
class Module:
    """A connected component of linked parts, tracked as one rigid body."""

    root_id: str
    members: tuple[tuple[str, RigidTransform], ...]  # (id, transform from root)


@dataclass(frozen=True)
class AssemblyGraph:
    objects: tuple[str, ...]
    states: tuple[AssemblyState, ...]
    trans_threshold: float = DEFAULT_TRANS_THRESHOLD_M
    rot_threshold: float = DEFAULT_ROT_THRESHOLD_DEG
    meshes: dict = field(default_factory=dict)
    symmetric: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.states:
            raise GraphConfigError("states: at least one state required")
        for i, state in enumerate(self.states):
            if state.index != i:
                raise GraphConfigError(f"states[{i}].index: must be {i}")
        if self.states[0].links:
            raise GraphConfigError(
                "states[0].links: first state tracks every part individually"
            )
        for state in self.states[:-1]:
            if state.switch_pair is None:
                raise GraphConfigError(
                    f"states[{state.index}].switch: required for non-terminal states"
                )
        if self.states[-1].switch_pair is not None:
            raise GraphConfigError("terminal state must not define a switch")
        known = set(self.objects)
        for state in self.states:
            if state.base_id not in known:
                raise GraphConfigError(
                    f"states[{state.index}].base: unknown id {state.base_id!r}"
                )
            _validate_forest(state, known)
            if state.switch_pair is not None:
                for oid in (state.switch_pair.a_id, state.switch_pair.b_id):
                    if oid not in known:
                        raise GraphConfigError(
                            f"states[{state.index}].switch: unknown id {oid!r}"
                        )


def _validate_forest(state: AssemblyState, known: set):
    parents: dict[str, str] = {}
    for link in state.links:
        for oid in (link.parent_id, link.child_id):
            if oid not in known:
                raise GraphConfigError(
                    f"states[{state.index}].links: unknown id {oid!r}"
                )
        if link.child_id in parents:
            raise GraphConfigError(
                f"states[{state.index}].links: {link.child_id!r} has two parents"
            )
        parents[link.child_id] = link.parent_id
    # Cycle check: follow parent chains; a forest terminates at a root.
    for start in parents:
        seen = {start}
        node = parents[start]
        while node in parents:
            if node in seen:
                raise GraphConfigError(
                    f"states[{state.index}].links: cycle through {node!r}"
                )
            seen.add(node)
            node = parents[node]


def load_graph(config_text) -> AssemblyGraph:
    """Parse and validate a graph config (JSON text or an already-parsed dict)."""
    cfg = json.loads(config_text) if isinstance(config_text, str) else config_text
    try:
        objects = [o["id"] for o in cfg["objects"]]
    except (KeyError, TypeError) as exc:
        raise GraphConfigError(f"objects: {exc}") from exc
    if len(set(objects)) != len(objects):
        raise GraphConfigError("objects: duplicate ids")
    meshes = {o["id"]: o.get("mesh", "") for o in cfg["objects"]}
    symmetric = {o["id"]: bool(o.get("symmetric", False)) for o in cfg["objects"]}

    thresholds = cfg.get("thresholds", {})
    trans_thr = float(thresholds.get("trans_m", DEFAULT_TRANS_THRESHOLD_M))
    rot_thr = float(thresholds.get("rot_deg", DEFAULT_ROT_THRESHOLD_DEG))

    states = []
    for i, raw in enumerate(cfg.get("states", [])):
        links = []
        for j, lr in enumerate(raw.get("links", [])):
            try:
                rel = pose_from_tq(lr["t"], lr["q"])
            except ValueError as exc:
                raise GraphConfigError(f"states[{i}].links[{j}]: {exc}") from exc
            links.append(KinematicLink(lr["parent"], lr["child"], rel))
        switch = None
        raw_switch = raw.get("switch")
        if raw_switch is not None:
            try:
                expected = pose_from_tq(raw_switch["t"], raw_switch["q"])
            except ValueError as exc:
                raise GraphConfigError(f"states[{i}].switch: {exc}") from exc
            switch = SwitchCondition(raw_switch["a"], raw_switch["b"], expected)
        states.append(
            AssemblyState(index=i, base_id=raw["base"], links=tuple(links), switch_pair=switch)
        )
    return AssemblyGraph(
        objects=tuple(objects),
        states=tuple(states),
        trans_threshold=trans_thr,
        rot_threshold=rot_thr,
        meshes=meshes,
        symmetric=symmetric,
    )


def check_transition(
    graph: AssemblyGraph, current_state_index: int, poses: dict[str, RigidTransform]
) -> int | None:
    """Return the next state index if the switch condition is met, else None.

    The relative pose ``invert(pose_a) o pose_b`` is compared against the
    expected relative; both the translation and the rotation offset must be
    strictly below their thresholds. Missing poses simply defer the check.
    """
    state = graph.states[current_state_index]
    if state.switch_pair is None:
        return None
    sw = state.switch_pair
    if sw.a_id not in poses or sw.b_id not in poses:
        return None
    relative = compose(invert(poses[sw.a_id]), poses[sw.b_id])
    e_trans = translation_error(relative.translation, sw.expected_relative.translation)
    e_rot = rotation_error_deg(relative.rotation, sw.expected_relative.rotation)
    if e_trans < graph.trans_threshold and e_rot < graph.rot_threshold:
        return current_state_index + 1
    return None


def slave_children(poses: dict, state: AssemblyState) -> None:
    """Overwrite child poses as compose(parent pose, link relative), in place.

    Links are processed parent-before-child, so each child is composed from
    its parent's already-updated pose; the rigidity invariant
    ``pose_child == compose(pose_parent, relative)`` then holds bit-exactly.
    Children whose chain does not reach a posed root are left untouched.
    """
    pending = {link.child_id for link in state.links}
    done = set()
    progress = True
    while progress:
        progress = False
        for link in state.links:
            if link.child_id in done:
                continue
            if link.parent_id in pending and link.parent_id not in done:
                continue
            if link.parent_id in poses:
                poses[link.child_id] = compose(poses[link.parent_id], link.relative)
            done.add(link.child_id)
            progress = True


def module_partition(graph: AssemblyGraph, state_index: int) -> list[Module]:
    """Connected components of the state's link forest.

    Member transforms are composed along the tree path from the component
    root; unlinked objects become singleton modules with identity transform.
    Modules are returned in roster order of their roots.
    """
    state = graph.states[state_index]
    children: dict[str, list[KinematicLink]] = {}
    has_parent = set()
    for link in state.links:
        children.setdefault(link.parent_id, []).append(link)
        has_parent.add(link.child_id)

    modules = []
    for oid in graph.objects:
        if oid in has_parent:
            continue
        members = []
        stack = [(oid, identity())]
        while stack:
            node, xf = stack.pop()
            members.append((node, xf))
            for link in children.get(node, ()):  # noqa: B023
                stack.append((link.child_id, compose(xf, link.relative)))
        modules.append(Module(root_id=oid, members=tuple(members)))
    return modules
