"""Fixed-step simulation core.

Scope hierarchy: one simulator holds one world, which holds models, which
hold objects; plugins bind to a scope and act through a capability-checked
handle (a higher scope's capability set is a superset of every scope nested
inside it).

The loop is deterministic: physics ticks run at a fixed rate (tick 1..N),
a frame is rendered whenever tick %% render_every == 0 (so frame i
corresponds to tick i*render_every exactly), and all outputs are pure
functions of (scene, input, config).  Live input is latched at tick
boundaries: between control messages the last target pose holds.
"""

from __future__ import annotations

import bisect
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
import yaml

from .camera import Frustum, build_stereo_rig, camera_info
from .haptics import DrillState, drill_prims, make_drill_state, resolve_drill, update_proxies
from .plugins import Plugin, create_plugin, plugin_registered
from .pose import Pose, look_at, pose_interpolate
from .render import (
    BodyPrim,
    FrameBuffers,
    MissingStyle,
    PointCloud,
    RenderScene,
    assemble_point_cloud,
    depth_linearize_pass,
    depth_meters,
    render_view,
)
from .scene import BodySpec, DrillParams, SceneDescription, VolumeSource
from .volume import VoxelEdit, VoxelVolume, load_volume


class ScopeViolation(Exception):
    pass


class InputStreamClosed(Exception):
    pass


@dataclass
class PluginFailure:
    name: str
    tick: int
    error: str


SCOPE_ORDER = ("object", "model", "world", "simulator")


class ScopeHandle:
    """Capability-checked facade a plugin uses to touch the simulation."""

    def __init__(self, kind: str, name: str, target: str | None, caps: frozenset[str], sim):
        self.kind = kind
        self.name = name
        self.target = target
        self.capabilities = caps
        self._sim = sim

    def allows(self, cap: str) -> bool:
        return cap in self.capabilities

    def _require(self, cap: str):
        if cap not in self.capabilities:
            raise ScopeViolation(f"{self.kind} scope {self.name!r} lacks {cap!r}")

    def get_object_pose(self, name: str) -> Pose:
        self._require(f"read_object:{name}")
        return self._sim.object_poses[name]

    def set_object_pose(self, name: str, pose: Pose):
        self._require(f"write_object:{name}")
        self._sim.object_poses[name] = pose

    def get_gravity(self):
        self._require("read_world")
        return self._sim.gravity

    def set_gravity(self, g):
        self._require("write_world")
        self._sim.gravity = tuple(float(c) for c in g)

    def latest_frame(self):
        self._require("observe_frames")
        return self._sim.latest_frame


def scope_capabilities(kind: str, target: str | None, scene: SceneDescription) -> frozenset[str]:
    """Nested capability sets: object < model < world < simulator."""
    names = list(scene.objects)
    if kind == "object":
        return frozenset({"read_world", f"read_object:{target}", f"write_object:{target}"})
    if kind == "model":
        caps = {"read_world"}
        for obj in scene.objects.values():
            if obj.model == target:
                caps |= {f"read_object:{obj.name}", f"write_object:{obj.name}"}
        return frozenset(caps)
    caps = {"read_world", "write_world"}
    for n in names:
        caps |= {f"read_object:{n}", f"write_object:{n}"}
    if kind == "world":
        return frozenset(caps)
    return frozenset(caps | {"observe_frames"})  # simulator


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class TrajectorySample:
    t: float
    camera_pose: Pose | None = None
    drill_pose: Pose | None = None
    drilling_enabled: bool | None = None


@dataclass
class Trajectory:
    samples: list[TrajectorySample]
    interpolation: str = "linear"  # "hold" | "linear"

    def __post_init__(self):
        ts = [s.t for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("sample times must be strictly increasing")
        self._series = {}
        for fieldname in ("camera_pose", "drill_pose"):
            pts = [(s.t, getattr(s, fieldname)) for s in self.samples
                   if getattr(s, fieldname) is not None]
            self._series[fieldname] = pts
        self._flags = [(s.t, s.drilling_enabled) for s in self.samples
                       if s.drilling_enabled is not None]

    @property
    def duration(self) -> float:
        return self.samples[-1].t if self.samples else 0.0

    def _pose_at(self, pts, t: float) -> Pose | None:
        if not pts:
            return None
        times = [p[0] for p in pts]
        i = bisect.bisect_right(times, t)
        if i == 0:
            return pts[0][1]
        if i == len(pts):
            return pts[-1][1]
        t0, p0 = pts[i - 1]
        t1, p1 = pts[i]
        if self.interpolation == "hold":
            return p0
        return pose_interpolate(p0, p1, (t - t0) / (t1 - t0))

    def at(self, t: float):
        """(camera_pose, drill_pose, drilling_enabled) at time t; None where
        the trajectory does not drive that channel."""
        cam = self._pose_at(self._series["camera_pose"], t)
        drill = self._pose_at(self._series["drill_pose"], t)
        flag = None
        if self._flags:
            times = [f[0] for f in self._flags]
            i = bisect.bisect_right(times, t)
            flag = self._flags[max(0, i - 1)][1]
        return cam, drill, flag


def _pose_to_list(p: Pose) -> list[float]:
    return [*p.position, *p.orientation]


def _pose_from_list(v) -> Pose:
    return Pose((v[0], v[1], v[2]), (v[3], v[4], v[5], v[6]))


def save_trajectory(traj: Trajectory, path: str | Path):
    doc = {
        "interpolation": traj.interpolation,
        "samples": [
            {
                "t": s.t,
                **({"camera_pose": _pose_to_list(s.camera_pose)} if s.camera_pose else {}),
                **({"drill_pose": _pose_to_list(s.drill_pose)} if s.drill_pose else {}),
                **({"drilling_enabled": s.drilling_enabled}
                   if s.drilling_enabled is not None else {}),
            }
            for s in traj.samples
        ],
    }
    Path(path).write_text(yaml.safe_dump(doc))


def load_trajectory(path: str | Path) -> Trajectory:
    doc = yaml.safe_load(Path(path).read_text())
    samples = [
        TrajectorySample(
            t=float(s["t"]),
            camera_pose=_pose_from_list(s["camera_pose"]) if "camera_pose" in s else None,
            drill_pose=_pose_from_list(s["drill_pose"]) if "drill_pose" in s else None,
            drilling_enabled=s.get("drilling_enabled"),
        )
        for s in doc.get("samples", [])
    ]
    return Trajectory(samples, doc.get("interpolation", "linear"))


def orbit_camera_pose(azimuth: float, center=(0.0, 0.0, 0.0), radius: float = 0.30,
                      polar: float = 0.6108652381980153) -> Pose:
    """Camera on a sphere around `center`, looking at it (polar from +z)."""
    cx, cy, cz = center
    eye = (
        cx + radius * np.sin(polar) * np.sin(azimuth),
        cy - radius * np.sin(polar) * np.cos(azimuth),
        cz + radius * np.cos(polar),
    )
    return look_at(eye, center)


def make_builtin_trajectory(setting: str, frames: int, render_every: int = 33,
                            physics_hz: int = 1000, center=(0.0, 0.0, 0.0),
                            orbit_radius: float = 0.30) -> Trajectory:
    """The two recording protocols: a camera orbit with the tool parked, or
    a fixed camera with the drill plunging and sweeping, burr on."""
    if frames < 1:
        raise ValueError("frames must be >= 1")
    duration = frames * render_every / physics_hz
    n_samples = max(frames, 2)
    ts = np.linspace(0.0, duration, n_samples + 1)
    samples = []
    if setting == "moving_camera":
        parked = Pose((0.05, 0.0, 0.09))
        for t in ts:
            az = 2.0 * np.pi * (t / duration)
            samples.append(TrajectorySample(
                t=float(t),
                camera_pose=orbit_camera_pose(az, center, orbit_radius),
                drill_pose=parked,
                drilling_enabled=False,
            ))
    elif setting == "moving_drill":
        cam = orbit_camera_pose(0.0, center, orbit_radius)
        for t in ts:
            u = t / duration
            plunge = min(u / 0.4, 1.0)
            z = 0.085 - 0.045 * plunge
            x = 0.0
            if u > 0.4:
                x = 0.006 * np.sin(3.0 * np.pi * (u - 0.4) / 0.6)
            samples.append(TrajectorySample(
                t=float(t),
                camera_pose=cam,
                drill_pose=Pose((x, 0.0, z)),
                drilling_enabled=True,
            ))
    else:
        raise ValueError(f"unknown builtin trajectory {setting!r}")
    return Trajectory(samples, "linear")


# ---------------------------------------------------------------------------
# live control input


class ControlStream:
    """Thread-safe latch for live drill/camera targets (zero-order hold)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._drill: Pose | None = None
        self._camera: Pose | None = None
        self._drilling: bool | None = None
        self._closed = False

    def push_drill(self, pose: Pose, drilling_enabled: bool | None = None):
        with self._lock:
            self._drill = pose
            if drilling_enabled is not None:
                self._drilling = drilling_enabled

    def push_camera(self, pose: Pose):
        with self._lock:
            self._camera = pose

    def close(self):
        with self._lock:
            self._closed = True

    @property
    def closed(self) -> bool:
        with self._lock:
            return self._closed

    def at(self, t: float):
        with self._lock:
            if self._closed:
                raise InputStreamClosed()
            return self._camera, self._drill, self._drilling


# ---------------------------------------------------------------------------
# configuration and per-tick records


@dataclass
class SimConfig:
    physics_hz: int = 1000
    render_every: int = 33
    width: int | None = None  # None = camera object's image size
    height: int | None = None
    baseline: float = 0.065
    frames: int | None = None
    ticks: int | None = None
    seed: int = 0
    threads: int | None = None
    pose_rate: str = "render"  # "render" | "physics"
    publish_every: int = 1
    track_objects: list[str] | None = None

    @property
    def dt(self) -> float:
        return 1.0 / self.physics_hz

    def total_ticks(self) -> int | None:
        if self.ticks is not None:
            return self.ticks
        if self.frames is not None:
            return self.frames * self.render_every
        return None


@dataclass
class FrameBundle:
    frame_id: int
    tick: int
    timestamp_ns: int
    left: FrameBuffers
    right: FrameBuffers
    depth_m: np.ndarray
    cloud: PointCloud
    poses: dict[str, Pose]
    camera_info: dict[str, dict]


@dataclass
class TickRecord:
    tick: int
    timestamp_ns: int
    poses: dict[str, Pose]
    force: np.ndarray
    contact: bool
    s_max: int
    drilling_enabled: bool
    edit: VoxelEdit | None = None
    frame: FrameBundle | None = None


# ---------------------------------------------------------------------------
# the simulation


def _style_color(params: dict, fallback=(160, 160, 160)):
    from .volume import parse_color_hex

    if "color" in params:
        return parse_color_hex(str(params["color"]))
    return fallback


class Simulation:
    """Owns all mutable world state; one instance per run, single-threaded."""

    def __init__(self, scene: SceneDescription, config: SimConfig, base_dir: str | Path = "."):
        self.scene = scene
        self.config = config
        self.gravity = scene.gravity
        self.object_poses: dict[str, Pose] = {n: o.pose for n, o in scene.objects.items()}
        self.latest_frame: FrameBundle | None = None
        self.plugin_errors: list[PluginFailure] = []
        self.tick = 0

        # volume (the drillable anatomy)
        self.volume_name = None
        self.volume: VoxelVolume | None = None
        for obj in scene.objects.values():
            if obj.kind == "volume":
                src: VolumeSource = obj.payload
                self.volume_name = obj.name
                self.volume = load_volume(src, base_dir)
                break
        if self.volume is None:
            # haptics needs a grid to query; an empty one keeps everything free
            self.volume = VoxelVolume.from_labels(
                np.zeros((1, 1, 1), dtype=np.uint8), (1.0, 1.0, 1.0), Pose(), {}
            )

        # camera: the object a control_camera device steers, else the first one
        cam_name = next(
            (d.controls for d in scene.devices if d.channel == "control_camera"), None
        )
        if cam_name is None or cam_name not in scene.objects:
            cam_name = next((o.name for o in scene.objects.values() if o.kind == "camera"), None)
        if cam_name is None:
            raise ValueError("scene declares no camera object")
        self.camera_name = cam_name
        spec = scene.objects[cam_name].payload
        width = config.width or spec.width
        height = config.height or spec.height
        self.frustum = Frustum.from_size(spec.near, spec.far, spec.fva, width, height)
        self.center_camera_pose = scene.objects[cam_name].pose
        self.rig = build_stereo_rig(self.center_camera_pose, self.frustum, config.baseline)

        # drill: the object a control_drill device steers, else the first
        # rigid body with drill parameters
        drill_name = next(
            (d.controls for d in scene.devices if d.channel == "control_drill"), None
        )
        if drill_name is None or drill_name not in scene.objects:
            drill_name = next(
                (o.name for o in scene.objects.values()
                 if o.kind == "rigid_body" and getattr(o.payload, "drill", None)),
                None,
            )
        self.drill_name = drill_name
        self.drill: DrillState | None = None
        self.drill_target: Pose | None = None
        if drill_name is not None:
            obj = scene.objects[drill_name]
            params = obj.payload.drill or DrillParams()
            style = scene.styles.get(drill_name)
            label = int(style.params.get("label_id", 32)) if style else 32
            color = _style_color(style.params if style else {},
                                 _style_color({"color": obj.payload.color} if obj.payload.color
                                              else {}))
            self.drill = make_drill_state(params, obj.pose, color=color, label=label)
            self.drill_target = obj.pose

        # static renderable bodies (anything that is not the drill)
        self.static_prims: list[BodyPrim] = []
        for obj in scene.objects.values():
            if obj.kind != "rigid_body" or obj.name == drill_name:
                continue
            body: BodySpec = obj.payload
            style = scene.styles.get(obj.name)
            if style is None or "label_id" not in style.params:
                raise MissingStyle(obj.name)
            label = int(style.params["label_id"])
            color = _style_color(style.params, _style_color(
                {"color": body.color} if body.color else {}))
            p = obj.pose.position
            if body.primitive == "sphere":
                self.static_prims.append(BodyPrim(p, p, body.radius, label, color))
            elif body.primitive == "capsule":
                a = obj.pose.apply((0.0, 0.0, -body.length / 2.0))
                b = obj.pose.apply((0.0, 0.0, body.length / 2.0))
                self.static_prims.append(BodyPrim(a, b, body.radius, label, color))
            # other primitives parse but do not render (mesh-free renderer)

        # light: first light object wins, else headlight
        self.light_dir = None
        for obj in scene.objects.values():
            if obj.kind == "light":
                if obj.payload.direction is not None:
                    self.light_dir = obj.payload.direction
                else:
                    self.light_dir = obj.pose.rotate((0.0, 0.0, -1.0))
                break

        self.track_objects = config.track_objects or [
            n for n in (cam_name, drill_name) if n is not None
        ]

        # plugins
        self.plugins: list[tuple[str, Plugin, ScopeHandle]] = []
        self._disabled_plugins: set[str] = set()
        for spec_p in scene.plugins:
            if plugin_registered(spec_p.name):
                self.register_plugin(spec_p)

    # ------------------------------------------------------------------

    def register_plugin(self, spec) -> ScopeHandle:
        """Instantiate a declared plugin and bind it to its scope's
        capability set; on_init failures disable the plugin, not the sim."""
        from .scene import UnknownPlugin

        if not plugin_registered(spec.name):
            raise UnknownPlugin(spec.name)
        handle = ScopeHandle(
            spec.scope, spec.name, spec.target,
            scope_capabilities(spec.scope, spec.target, self.scene), self,
        )
        inst = create_plugin(spec.name)
        try:
            inst.on_init(handle, self.scene)
        except Exception as exc:  # noqa: BLE001 - plugin isolation
            self._disabled_plugins.add(spec.name)
            self.plugin_errors.append(PluginFailure(spec.name, 0, repr(exc)))
        self.plugins.append((spec.name, inst, handle))
        return handle

    def _plugin_call(self, which: str, dt: float):
        for name, inst, _handle in self.plugins:
            if name in self._disabled_plugins:
                continue
            try:
                getattr(inst, which)(dt)
            except Exception as exc:  # noqa: BLE001 - plugin isolation
                self._disabled_plugins.add(name)
                self.plugin_errors.append(PluginFailure(name, self.tick, repr(exc)))

    def timestamp_ns(self, tick: int) -> int:
        return tick * round(1e9 / self.config.physics_hz)

    def tracked_poses(self) -> dict[str, Pose]:
        out = {}
        for name in self.track_objects:
            if name == self.camera_name:
                out[name] = self.center_camera_pose
            elif name == self.drill_name and self.drill is not None:
                out[name] = self.drill.pose
            else:
                out[name] = self.object_poses[name]
        return out

    def render_frame(self, frame_id: int, tick: int) -> FrameBundle:
        prims = list(self.static_prims)
        if self.drill is not None:
            prims.extend(drill_prims(self.drill))
        rscene = RenderScene(volume=self.volume, prims=prims, light_dir=self.light_dir)
        left = render_view(rscene, self.rig.left, self.config.threads)
        right = render_view(rscene, self.rig.right, self.config.threads)
        n_plane = depth_linearize_pass(left, self.rig.left)
        depth = depth_meters(n_plane, self.rig.left)
        cloud = assemble_point_cloud(left, self.rig.left, n_plane)
        rfl = self.rig.right_from_left
        infos = {
            "left": camera_info(self.rig.left, self.rig.baseline, rfl),
            "right": camera_info(self.rig.right, self.rig.baseline, rfl),
        }
        bundle = FrameBundle(
            frame_id=frame_id,
            tick=tick,
            timestamp_ns=self.timestamp_ns(tick),
            left=left,
            right=right,
            depth_m=depth,
            cloud=cloud,
            poses=self.tracked_poses(),
            camera_info=infos,
        )
        self.latest_frame = bundle
        return bundle

    def step(self, tick: int, control) -> TickRecord:
        """One physics tick; `control` is (camera_pose, drill_pose, drilling)."""
        self.tick = tick
        cfg = self.config
        cam_target, drill_target, drilling = control
        if cam_target is not None:
            self.center_camera_pose = cam_target
            self.rig = build_stereo_rig(cam_target, self.frustum, cfg.baseline)
            self.object_poses[self.camera_name] = cam_target
        edit = None
        force = np.zeros(3)
        contact = False
        s_max = 0
        drilling_enabled = False
        if self.drill is not None:
            if drilling is not None:
                self.drill.drilling_enabled = bool(drilling)
            if drill_target is not None:
                self.drill_target = drill_target
            target = self.drill_target
            pr = update_proxies(target, self.volume, self.drill)
            out = resolve_drill(self.drill, pr, self.volume, target, tick)
            edit = out.edit
            force = out.force
            contact = out.contact
            s_max = out.s_max
            drilling_enabled = self.drill.drilling_enabled
            self.object_poses[self.drill_name] = out.pose
        self._plugin_call("on_physics_update", cfg.dt)
        frame = None
        if tick % cfg.render_every == 0:
            frame = self.render_frame(tick // cfg.render_every, tick)
            self._plugin_call("on_graphics_update", cfg.render_every * cfg.dt)
        return TickRecord(
            tick=tick,
            timestamp_ns=self.timestamp_ns(tick),
            poses=self.tracked_poses(),
            force=force,
            contact=contact,
            s_max=s_max,
            drilling_enabled=drilling_enabled,
            edit=edit,
            frame=frame,
        )

    def shutdown(self):
        for name, inst, _handle in self.plugins:
            if name not in self._disabled_plugins:
                try:
                    inst.on_shutdown()
                except Exception as exc:  # noqa: BLE001
                    self.plugin_errors.append(PluginFailure(name, self.tick, repr(exc)))


def run_loop(scene: SceneDescription, input_source, config: SimConfig,
             base_dir: str | Path = ".", sim: Simulation | None = None,
             realtime: bool = False) -> Iterator[TickRecord]:
    """Drive a Simulation tick by tick, yielding every TickRecord.

    `input_source` is a Trajectory or a ControlStream.  With a tick budget
    (config.ticks/frames) the loop is finite; a live stream runs until
    closed.  `realtime` paces the loop against the wall clock in chunks of
    one render period (only meaningful for live serving).
    """
    own = sim is None
    if own:
        sim = Simulation(scene, config, base_dir)
    total = config.total_ticks()
    if total is None and isinstance(input_source, Trajectory):
        total = int(round(input_source.duration * config.physics_hz))
    tick = 0
    period_start = time.monotonic()
    try:
        while total is None or tick < total:
            tick += 1
            t = tick / config.physics_hz
            try:
                control = input_source.at(t)
            except InputStreamClosed:
                break
            yield sim.step(tick, control)
            if realtime and tick % config.render_every == 0:
                elapsed = time.monotonic() - period_start
                budget = config.render_every / config.physics_hz
                if elapsed < budget:
                    time.sleep(budget - elapsed)
                period_start = time.monotonic()
    finally:
        if own:
            sim.shutdown()
