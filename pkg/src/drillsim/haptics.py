"""Finger-proxy haptics and the drill shaft collision logic.

The drill is approximated by a tip tool-cursor at the drill origin plus
shaft tool-cursors spaced along the +z drill axis.  Each cursor keeps a
proxy/goal sphere pair: every tick the goal jumps to the commanded pose
composed with the cursor offset, while the proxy marches from its previous
position toward the goal and stops when its sphere touches the occupied
voxel region (then slides along the contact tangent, up to 3 iterations).

Pose resolution per tick: the cursor with the largest proxy/goal error
decides.  If that is a shaft cursor (beyond epsilon), the drill pose snaps
to the shaft-derived pose and no voxels are removed; otherwise the drill
follows the tip proxy and, when the burr is on, voxels around the tip goal
are removed.  Only the tip ever removes tissue.

Force: F = stiffness * (goal - proxy) of the deciding cursor, magnitude
clamped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pose import Pose
from .render import BodyPrim
from .scene import DrillParams
from .volume import VoxelEdit, VoxelVolume

EPSILON = 1e-6  # pose-snap threshold, meters
MAX_SLIDES = 3


@dataclass
class ToolCursor:
    role: str  # "tip" | "shaft"
    radius: float
    offset: tuple[float, float, float]  # drill frame, tip -> cursor
    proxy: np.ndarray
    goal: np.ndarray


@dataclass
class DrillState:
    pose: Pose
    cursors: list[ToolCursor]
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    drilling_enabled: bool = False
    stiffness: float = 500.0
    f_max: float = 5.0
    epsilon: float = EPSILON
    contact: bool = False
    color: tuple[int, int, int] = (192, 192, 192)
    label: int = 32

    @property
    def tip(self) -> ToolCursor:
        return self.cursors[0]


@dataclass
class ProxyResult:
    deltas: np.ndarray  # (C, 3) goal - proxy per cursor
    norms: np.ndarray  # (C,)
    e_max: np.ndarray  # (3,) delta of the deciding cursor
    s_max: int  # deciding cursor index; 0 is the tip


@dataclass
class ResolveOutcome:
    pose: Pose
    force: np.ndarray
    edit: VoxelEdit | None
    contact: bool
    s_max: int


def make_drill_state(params: DrillParams, initial_pose: Pose,
                     color=(192, 192, 192), label=32) -> DrillState:
    cursors = [
        ToolCursor("tip", params.tip_radius, (0.0, 0.0, 0.0),
                   np.array(initial_pose.position), np.array(initial_pose.position))
    ]
    n = max(1, params.shaft_cursors)
    for i in range(n):
        off = (0.0, 0.0, (i + 1) * params.shaft_length / n)
        p = np.array(initial_pose.apply(off))
        cursors.append(ToolCursor("shaft", params.shaft_radius, off, p.copy(), p.copy()))
    return DrillState(pose=initial_pose, cursors=cursors, color=color, label=label)


def control_law(e, stiffness: float = 500.0, f_max: float = 5.0) -> np.ndarray:
    """Linear spring with magnitude clamp, direction preserved."""
    f = stiffness * np.asarray(e, dtype=np.float64)
    n = float(np.linalg.norm(f))
    if n > f_max:
        f = f * (f_max / n)
    return f


def _march_segment(volume: VoxelVolume, start: np.ndarray, goal: np.ndarray,
                   radius: float, step: float):
    """Move from start toward goal; stop before the first blocked sample.
    Returns (reached_position, blocked_sample or None)."""
    motion = goal - start
    length = float(np.linalg.norm(motion))
    if length < 1e-15:
        return start.copy(), None
    d = motion / length
    # conservative reject: the whole swept sphere stays clear of the volume
    if volume.box_distance(tuple(start)) > radius + length:
        return goal.copy(), None
    nsteps = int(math.ceil(length / step))
    prev = start
    for i in range(1, nsteps + 1):
        t = min(i * step, length)
        p = start + d * t
        if volume.sphere_blocked(tuple(p), radius):
            return prev.copy(), p
        prev = p
    return goal.copy(), None


def _advance_proxy(volume: VoxelVolume, proxy: np.ndarray, goal: np.ndarray,
                   radius: float, step: float) -> np.ndarray:
    pos = proxy
    target = goal
    for _ in range(MAX_SLIDES + 1):
        pos, blocked = _march_segment(volume, pos, target, radius, step)
        if blocked is None:
            break
        motion = target - pos
        n = np.array(volume.gradient_normal(tuple(blocked), fallback=tuple(-motion)))
        tangential = motion - float(motion @ n) * n
        if float(np.linalg.norm(tangential)) < 1e-12:
            break
        target = pos + tangential
    return pos


def deciding_cursor(norms) -> int:
    """Index of the max-error cursor; strict > scan so ties keep the lowest
    index (the tip, at index 0, wins an all-equal tie)."""
    s_max = 0
    best = norms[0]
    for idx in range(1, len(norms)):
        if norms[idx] > best:
            best = norms[idx]
            s_max = idx
    return s_max


def update_proxies(input_pose: Pose, volume: VoxelVolume, state: DrillState) -> ProxyResult:
    """Advance every cursor's proxy toward its goal (= input pose composed
    with the cursor offset); report per-cursor errors and the deciding
    cursor."""
    step = 0.5 * min(volume.spacing)
    count = len(state.cursors)
    deltas = np.zeros((count, 3))
    norms = np.zeros(count)
    for idx, cur in enumerate(state.cursors):
        cur.goal = np.array(input_pose.apply(cur.offset))
        cur.proxy = _advance_proxy(volume, cur.proxy, cur.goal, cur.radius, step)
        deltas[idx] = cur.goal - cur.proxy
        norms[idx] = np.linalg.norm(deltas[idx])
    s_max = deciding_cursor(norms)
    state.contact = bool(norms[s_max] > state.epsilon)
    return ProxyResult(deltas=deltas, norms=norms, e_max=deltas[s_max].copy(), s_max=s_max)


def resolve_drill(state: DrillState, pr: ProxyResult, volume: VoxelVolume,
                  input_pose: Pose, tick: int = 0) -> ResolveOutcome:
    """Shaft-vs-tip branch: snap to the constrained shaft pose, or follow
    the tip and (burr on) remove the voxels colliding with it."""
    edit = None
    if pr.norms[pr.s_max] > state.epsilon and pr.s_max != 0:
        cur = state.cursors[pr.s_max]
        back = input_pose.rotate(cur.offset)
        pos = (cur.proxy[0] - back[0], cur.proxy[1] - back[1], cur.proxy[2] - back[2])
        pose = Pose(pos, input_pose.orientation)
        force = control_law(pr.e_max, state.stiffness, state.f_max)
    else:
        tip = state.tip
        pose = Pose(tuple(tip.proxy), input_pose.orientation)
        if state.drilling_enabled:
            candidate = volume.remove_colliding_voxels(tuple(tip.goal), tip.radius, tick)
            if candidate.count > 0:
                edit = candidate
        force = control_law(pr.deltas[0], state.stiffness, state.f_max)
    state.pose = pose
    state.force = force
    return ResolveOutcome(pose=pose, force=force, edit=edit,
                          contact=state.contact, s_max=pr.s_max)


def drill_prims(state: DrillState) -> list[BodyPrim]:
    """Render/collision decomposition: tip sphere + shaft capsule."""
    pose = state.pose
    tip = state.tip
    prims = [BodyPrim(a=pose.position, b=pose.position, radius=tip.radius,
                      label=state.label, color=state.color)]
    shaft = [c for c in state.cursors if c.role == "shaft"]
    if shaft:
        a = pose.apply(shaft[0].offset)
        b = pose.apply(shaft[-1].offset)
        prims.append(BodyPrim(a=a, b=b, radius=shaft[0].radius,
                              label=state.label, color=state.color))
    return prims
