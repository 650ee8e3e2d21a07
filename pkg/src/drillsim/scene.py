"""Modular scene-description files: a launch file names one world file, one
input-devices file and any number of model files; objects, plugins and
render styles are merged across all of them into one validated scene.

Parenting is modular: a child may name a parent declared in a different
file, so links resolve only after every file has loaded (collect phase,
then link phase).  Unknown keys anywhere are warnings, never errors, so
newer documents keep loading on older code.

Effective render style per object follows precedence object > model >
world; at equal scope the last declaration wins (world file first, then
model files in launch order).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .plugins import plugin_registered
from .pose import Pose, quat_from_euler_xyz
from .volume import VolumeSource

OBJECT_KINDS = ("camera", "light", "rigid_body", "volume", "sensor", "actuator")
PLUGIN_SCOPES = ("simulator", "world", "model", "object")
STYLE_SCOPES = ("world", "model", "object")

_LAUNCH_KEYS = {"world", "input_devices", "models", "plugins"}
_WORLD_KEYS = {"name", "gravity", "cameras", "lights", "shaders", "plugins"}
_MODEL_KEYS = {"name", "bodies", "volumes", "joints", "styles", "plugins"}
_DEVICES_KEYS = {"devices", "plugins"}
_POSE_KEYS = {"position", "orientation", "euler"}
_CAMERA_KEYS = {"name", "parent", "pose", "near", "far", "fva", "width", "height"}
_LIGHT_KEYS = {"name", "parent", "pose", "direction"}
_BODY_KEYS = {"name", "parent", "pose", "primitive", "radius", "length", "size", "color", "drill"}
_VOLUME_KEYS = {"name", "parent", "pose", "source"}
_SOURCE_KEYS = {"prefix", "count", "format", "spacing", "origin", "label_map", "background"}


class SceneError(Exception):
    pass


class MissingFile(SceneError):
    def __init__(self, path):
        self.path = str(path)
        super().__init__(f"file not found: {path}")


class MalformedDocument(SceneError):
    def __init__(self, path, line, column, detail):
        self.path = str(path)
        self.line = line
        self.column = column
        super().__init__(f"{path}:{line}:{column}: {detail}")


class DuplicateKey(SceneError):
    def __init__(self, key, line, column):
        self.key = key
        self.line = line
        self.column = column
        super().__init__(f"duplicate key {key!r} at line {line}, column {column}")


class MissingRequiredField(SceneError):
    def __init__(self, fieldname, where=""):
        self.field = fieldname
        super().__init__(f"missing required field {fieldname!r}" + (f" in {where}" if where else ""))


class UnresolvedParent(SceneError):
    def __init__(self, child, missing_parent):
        self.child = child
        self.missing_parent = missing_parent
        super().__init__(f"object {child!r} names unknown parent {missing_parent!r}")


class CyclicParent(SceneError):
    def __init__(self, path):
        self.cycle = list(path)
        super().__init__("parent cycle: " + " -> ".join(path))


class DuplicateObjectName(SceneError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"object name {name!r} declared more than once")


class UnknownPlugin(SceneError):
    def __init__(self, name):
        self.plugin = name
        super().__init__(f"plugin {name!r} is not in the registry")


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate mapping keys instead of silently
    keeping the last one."""


def _construct_mapping(loader, node, deep=False):
    seen = set()
    for key_node, _value in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            raise DuplicateKey(key, key_node.start_mark.line + 1, key_node.start_mark.column + 1)
        seen.add(key)
    return yaml.SafeLoader.construct_mapping(loader, node, deep)


_StrictLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping
)


def _load_yaml(path: Path) -> dict:
    if not path.exists():
        raise MissingFile(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.load(fh, Loader=_StrictLoader)
    except DuplicateKey:
        raise
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 0
        col = mark.column + 1 if mark else 0
        raise MalformedDocument(path, line, col, str(getattr(exc, "problem", exc))) from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise MalformedDocument(path, 1, 1, "document root must be a mapping")
    return doc


# ---------------------------------------------------------------------------
# domain types


@dataclass
class PluginSpec:
    name: str
    scope: str
    target: str | None = None
    params: dict = field(default_factory=dict)


@dataclass
class RenderStyleSpec:
    scope: str
    style_name: str
    params: dict = field(default_factory=dict)
    target: str | None = None


@dataclass
class DrillParams:
    tip_radius: float = 0.002
    shaft_radius: float = 0.0025
    shaft_cursors: int = 5
    shaft_length: float = 0.05


@dataclass
class CameraSpec:
    near: float = 0.05
    far: float = 2.0
    fva: float = 0.7853981633974483
    width: int = 640
    height: int = 480


@dataclass
class LightSpec:
    direction: tuple[float, float, float] | None = None


@dataclass
class BodySpec:
    primitive: str = "sphere"  # sphere | capsule | box
    radius: float = 0.01
    length: float = 0.0  # capsule axis length
    size: tuple[float, float, float] | None = None  # box half-extents
    color: str | None = None
    drill: DrillParams | None = None


@dataclass
class GenericSpec:
    params: dict = field(default_factory=dict)


@dataclass
class ObjectSpec:
    name: str
    kind: str
    pose: Pose = field(default_factory=Pose)
    parent: str | None = None
    model: str | None = None
    payload: object = None


@dataclass
class DeviceBinding:
    name: str
    controls: str
    channel: str


@dataclass
class Diagnostic:
    severity: str  # "error" | "warning"
    object_name: str
    message: str


@dataclass
class LaunchFile:
    world_path: str
    input_devices_path: str
    model_paths: list[str] = field(default_factory=list)
    plugins: list[PluginSpec] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


@dataclass(eq=False)
class SceneDescription:
    objects: dict[str, ObjectSpec] = field(default_factory=dict)
    parent_edges: dict[str, str] = field(default_factory=dict)
    plugins: list[PluginSpec] = field(default_factory=list)
    style_decls: list[RenderStyleSpec] = field(default_factory=list)
    styles: dict[str, RenderStyleSpec] = field(default_factory=dict)  # effective, per object
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)
    devices: list[DeviceBinding] = field(default_factory=list)
    joints: list[dict] = field(default_factory=list)
    model_names: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __eq__(self, other):
        # warnings are diagnostics about the concrete documents, not scene
        # content; round-trip equality is over the semantic fields.  Plugin
        # and style declaration lists compare as multisets: serialization
        # regroups them by owning file without changing their meaning.
        if not isinstance(other, SceneDescription):
            return NotImplemented

        def pkey(p: PluginSpec):
            return (p.scope, p.name, p.target or "", sorted(p.params.items()))

        def skey(s: RenderStyleSpec):
            return (s.scope, s.style_name, s.target or "", sorted(s.params.items()))

        return (
            self.objects == other.objects
            and self.parent_edges == other.parent_edges
            and sorted(self.plugins, key=pkey) == sorted(other.plugins, key=pkey)
            and sorted(self.style_decls, key=skey) == sorted(other.style_decls, key=skey)
            and self.styles == other.styles
            and self.gravity == other.gravity
            and self.devices == other.devices
            and self.joints == other.joints
            and sorted(self.model_names) == sorted(other.model_names)
        )


# ---------------------------------------------------------------------------
# low-level field parsers


def _warn_unknown(doc: dict, known: set, where: str, warnings: list[str]):
    for key in doc:
        if key not in known:
            warnings.append(f"{where}: ignoring unknown key {key!r}")


def _parse_vec3(v, where: str) -> tuple[float, float, float]:
    if isinstance(v, dict):
        return (float(v.get("x", 0.0)), float(v.get("y", 0.0)), float(v.get("z", 0.0)))
    if isinstance(v, (list, tuple)) and len(v) == 3:
        return tuple(float(c) for c in v)
    raise MissingRequiredField("x/y/z", where)


def _parse_pose(doc, where: str, warnings: list[str]) -> Pose:
    if doc is None:
        return Pose()
    _warn_unknown(doc, _POSE_KEYS, where, warnings)
    pos = _parse_vec3(doc["position"], where) if "position" in doc else (0.0, 0.0, 0.0)
    quat = None
    if "orientation" in doc:
        o = doc["orientation"]
        quat = (float(o.get("w", 1.0)), float(o.get("x", 0.0)),
                float(o.get("y", 0.0)), float(o.get("z", 0.0)))
    if "euler" in doc:
        e = doc["euler"]
        rpy = (float(e.get("r", 0.0)), float(e.get("p", 0.0)), float(e.get("y", 0.0)))
        if quat is None:
            quat = quat_from_euler_xyz(*rpy)
        else:
            warnings.append(f"{where}: both quaternion and euler given; quaternion wins")
    return Pose(pos, quat if quat is not None else (1.0, 0.0, 0.0, 0.0))


def _parse_plugins(items, default_scope: str, where: str, warnings: list[str],
                   model_name: str | None = None) -> list[PluginSpec]:
    out = []
    for item in items or []:
        _warn_unknown(item, {"name", "scope", "target", "params"}, where, warnings)
        if "name" not in item:
            raise MissingRequiredField("name", f"{where} plugin")
        scope = item.get("scope", default_scope)
        if scope not in PLUGIN_SCOPES:
            raise MalformedDocument(where, 0, 0, f"bad plugin scope {scope!r}")
        target = item.get("target")
        if scope == "model" and target is None:
            target = model_name  # a model file's own plugins default to it
        spec = PluginSpec(
            name=str(item["name"]),
            scope=scope,
            target=target,
            params=dict(item.get("params") or {}),
        )
        if spec.scope in ("object", "model") and not spec.target:
            raise MissingRequiredField("target", f"{where} plugin {spec.name!r}")
        if not plugin_registered(spec.name):
            raise UnknownPlugin(spec.name)
        out.append(spec)
    return out


def _parse_styles(items, default_scope: str, model_name: str | None,
                  where: str, warnings: list[str]) -> list[RenderStyleSpec]:
    out = []
    for item in items or []:
        _warn_unknown(item, {"scope", "style", "target", "params"}, where, warnings)
        if "style" not in item:
            raise MissingRequiredField("style", f"{where} style")
        scope = item.get("scope", default_scope)
        if scope not in STYLE_SCOPES:
            raise MalformedDocument(where, 0, 0, f"bad style scope {scope!r}")
        target = item.get("target")
        if scope == "model" and target is None:
            target = model_name
        if scope in ("model", "object") and not target:
            raise MissingRequiredField("target", f"{where} style")
        out.append(RenderStyleSpec(scope, str(item["style"]), dict(item.get("params") or {}), target))
    return out


def _parse_source(doc, pose: Pose, where: str, warnings: list[str]) -> VolumeSource:
    _warn_unknown(doc, _SOURCE_KEYS, where, warnings)
    for req in ("prefix", "count"):
        if req not in doc:
            raise MissingRequiredField(req, where)
    label_map = {}
    for hexcolor, entry in (doc.get("label_map") or {}).items():
        if isinstance(entry, dict):
            label_map[str(hexcolor)] = (int(entry["id"]), str(entry.get("name", "")))
        else:
            label_map[str(hexcolor)] = (int(entry[0]), str(entry[1]))
    spacing = _parse_vec3(doc.get("spacing", {"x": 1e-3, "y": 1e-3, "z": 1e-3}), where)
    origin = pose
    if "origin" in doc and doc["origin"] is not None:
        origin = _parse_pose(doc["origin"], f"{where}.origin", warnings)
    return VolumeSource(
        prefix=str(doc["prefix"]),
        count=int(doc["count"]),
        fmt=str(doc.get("format", "png")),
        spacing=spacing,
        origin=origin,
        label_map=label_map,
        background=str(doc.get("background", "#000000")),
    )


# ---------------------------------------------------------------------------
# file parsers


def parse_launch(path: str | Path) -> LaunchFile:
    """Parse the launch (entry-point) file; referenced paths come back
    resolved relative to the launch file's directory."""
    path = Path(path)
    doc = _load_yaml(path)
    warnings: list[str] = []
    _warn_unknown(doc, _LAUNCH_KEYS, path.name, warnings)
    for req in ("world", "input_devices"):
        if req not in doc:
            raise MissingRequiredField(req, path.name)
    base = path.parent
    models = [str(base / m) for m in (doc.get("models") or [])]
    plugins = _parse_plugins(doc.get("plugins"), "simulator", path.name, warnings)
    return LaunchFile(
        world_path=str(base / doc["world"]),
        input_devices_path=str(base / doc["input_devices"]),
        model_paths=models,
        plugins=plugins,
        warnings=warnings,
    )


def _parse_world(doc: dict, where: str, scene: SceneDescription):
    _warn_unknown(doc, _WORLD_KEYS, where, scene.warnings)
    if "gravity" in doc:
        scene.gravity = _parse_vec3(doc["gravity"], f"{where}.gravity")
    for cam in doc.get("cameras") or []:
        _warn_unknown(cam, _CAMERA_KEYS, f"{where}.cameras", scene.warnings)
        name = _require_name(cam, f"{where}.cameras")
        pose = _parse_pose(cam.get("pose"), f"{where}.{name}.pose", scene.warnings)
        payload = CameraSpec(
            near=float(cam.get("near", 0.05)),
            far=float(cam.get("far", 2.0)),
            fva=float(cam.get("fva", 0.7853981633974483)),
            width=int(cam.get("width", 640)),
            height=int(cam.get("height", 480)),
        )
        _add_object(scene, ObjectSpec(name, "camera", pose, cam.get("parent"), None, payload))
    for light in doc.get("lights") or []:
        _warn_unknown(light, _LIGHT_KEYS, f"{where}.lights", scene.warnings)
        name = _require_name(light, f"{where}.lights")
        pose = _parse_pose(light.get("pose"), f"{where}.{name}.pose", scene.warnings)
        direction = None
        if light.get("direction") is not None:
            direction = _parse_vec3(light["direction"], f"{where}.{name}.direction")
        _add_object(scene, ObjectSpec(name, "light", pose, light.get("parent"), None,
                                      LightSpec(direction)))
    shaders = doc.get("shaders") or {}
    if shaders:
        _warn_unknown(shaders, {"styles"}, f"{where}.shaders", scene.warnings)
    scene.style_decls.extend(
        _parse_styles(shaders.get("styles"), "world", None, f"{where}.shaders", scene.warnings)
    )
    scene.plugins.extend(_parse_plugins(doc.get("plugins"), "world", where, scene.warnings))


def _require_name(item: dict, where: str) -> str:
    if "name" not in item:
        raise MissingRequiredField("name", where)
    return str(item["name"])


def _add_object(scene: SceneDescription, obj: ObjectSpec):
    if obj.name in scene.objects:
        raise DuplicateObjectName(obj.name)
    scene.objects[obj.name] = obj


def _parse_model(doc: dict, where: str, default_name: str, scene: SceneDescription):
    _warn_unknown(doc, _MODEL_KEYS, where, scene.warnings)
    model_name = str(doc.get("name", default_name))
    scene.model_names.append(model_name)
    for body in doc.get("bodies") or []:
        _warn_unknown(body, _BODY_KEYS, f"{where}.bodies", scene.warnings)
        name = _require_name(body, f"{where}.bodies")
        pose = _parse_pose(body.get("pose"), f"{where}.{name}.pose", scene.warnings)
        drill = None
        if body.get("drill") is not None:
            d = body["drill"]
            _warn_unknown(d, {"tip_radius", "shaft_radius", "shaft_cursors", "shaft_length"},
                          f"{where}.{name}.drill", scene.warnings)
            drill = DrillParams(
                tip_radius=float(d.get("tip_radius", 0.002)),
                shaft_radius=float(d.get("shaft_radius", 0.0025)),
                shaft_cursors=int(d.get("shaft_cursors", 5)),
                shaft_length=float(d.get("shaft_length", 0.05)),
            )
        size = None
        if body.get("size") is not None:
            size = _parse_vec3(body["size"], f"{where}.{name}.size")
        payload = BodySpec(
            primitive=str(body.get("primitive", "sphere")),
            radius=float(body.get("radius", 0.01)),
            length=float(body.get("length", 0.0)),
            size=size,
            color=body.get("color"),
            drill=drill,
        )
        _add_object(scene, ObjectSpec(name, "rigid_body", pose, body.get("parent"),
                                      model_name, payload))
    for vol in doc.get("volumes") or []:
        _warn_unknown(vol, _VOLUME_KEYS, f"{where}.volumes", scene.warnings)
        name = _require_name(vol, f"{where}.volumes")
        pose = _parse_pose(vol.get("pose"), f"{where}.{name}.pose", scene.warnings)
        if "source" not in vol:
            raise MissingRequiredField("source", f"{where}.{name}")
        payload = _parse_source(vol["source"], pose, f"{where}.{name}.source", scene.warnings)
        _add_object(scene, ObjectSpec(name, "volume", pose, vol.get("parent"),
                                      model_name, payload))
    scene.joints.extend(dict(j) for j in doc.get("joints") or [])
    scene.style_decls.extend(
        _parse_styles(doc.get("styles"), "model", model_name, where, scene.warnings)
    )
    scene.plugins.extend(
        _parse_plugins(doc.get("plugins"), "model", where, scene.warnings, model_name)
    )


def _parse_devices(doc: dict, where: str, scene: SceneDescription):
    _warn_unknown(doc, _DEVICES_KEYS, where, scene.warnings)
    for dev in doc.get("devices") or []:
        _warn_unknown(dev, {"name", "controls", "channel"}, f"{where}.devices", scene.warnings)
        scene.devices.append(
            DeviceBinding(
                name=str(dev.get("name", "device")),
                controls=str(dev.get("controls", "")),
                channel=str(dev.get("channel", "control_drill")),
            )
        )
    if doc.get("plugins"):
        # parsed for forward compatibility; not acted upon
        scene.warnings.append(f"{where}: input-device plugins are recorded but not instantiated")


# ---------------------------------------------------------------------------
# merge + link


def _link_and_resolve(scene: SceneDescription):
    for obj in scene.objects.values():
        if obj.parent is not None:
            if obj.parent not in scene.objects:
                raise UnresolvedParent(obj.name, obj.parent)
            scene.parent_edges[obj.name] = obj.parent
    # cycle check over the child -> parent map
    for start in scene.parent_edges:
        seen = [start]
        node = start
        while node in scene.parent_edges:
            node = scene.parent_edges[node]
            if node in seen:
                raise CyclicParent(seen + [node])
            seen.append(node)
    # effective styles: object > model > world; last declaration wins per scope
    rank = {"world": 0, "model": 1, "object": 2}
    for obj in scene.objects.values():
        best = None
        for decl in scene.style_decls:
            if decl.scope == "world":
                applies = True
            elif decl.scope == "model":
                applies = obj.model is not None and decl.target == obj.model
            else:
                applies = decl.target == obj.name
            if applies and (best is None or rank[decl.scope] >= rank[best.scope]):
                best = decl
        if best is not None:
            scene.styles[obj.name] = best
    # plugin targets must exist
    for spec in scene.plugins:
        if spec.scope == "object" and spec.target not in scene.objects:
            raise UnresolvedParent(f"plugin {spec.name}", spec.target)
        if spec.scope == "model" and spec.target not in scene.model_names:
            raise UnresolvedParent(f"plugin {spec.name}", spec.target)


def load_scene(launch: LaunchFile) -> SceneDescription:
    """Two-phase load: parse + collect every file, then link across files."""
    scene = SceneDescription()
    scene.warnings.extend(launch.warnings)
    scene.plugins.extend(launch.plugins)
    world_path = Path(launch.world_path)
    _parse_world(_load_yaml(world_path), world_path.name, scene)
    dev_path = Path(launch.input_devices_path)
    _parse_devices(_load_yaml(dev_path), dev_path.name, scene)
    for mp in launch.model_paths:
        mp = Path(mp)
        _parse_model(_load_yaml(mp), mp.name, mp.stem, scene)
    _link_and_resolve(scene)
    return scene


def load_scene_file(launch_path: str | Path) -> SceneDescription:
    return load_scene(parse_launch(launch_path))


def validate_scene(scene: SceneDescription) -> list[Diagnostic]:
    """Empty list iff every invariant holds; diagnostics otherwise."""
    out: list[Diagnostic] = []
    for name, parent in scene.parent_edges.items():
        if parent not in scene.objects:
            out.append(Diagnostic("error", name, f"parent {parent!r} does not exist"))
    for spec in scene.plugins:
        if spec.scope in ("object", "model") and not spec.target:
            out.append(Diagnostic("error", spec.name, "plugin target required"))
        elif spec.scope == "object" and spec.target not in scene.objects:
            out.append(Diagnostic("error", spec.name, f"plugin target {spec.target!r} missing"))
    for decl in scene.style_decls:
        if decl.scope == "object" and decl.target not in scene.objects:
            out.append(Diagnostic("error", decl.style_name,
                                  f"style target {decl.target!r} missing"))
        if decl.scope == "model" and decl.target not in scene.model_names:
            out.append(Diagnostic("error", decl.style_name,
                                  f"style target model {decl.target!r} missing"))
    for obj in scene.objects.values():
        if obj.kind == "volume":
            src: VolumeSource = obj.payload
            if src.count < 1:
                out.append(Diagnostic("error", obj.name, "volume has no slices"))
            if min(src.spacing) <= 0:
                out.append(Diagnostic("error", obj.name, "volume spacing must be positive"))
        if obj.kind == "camera":
            cam: CameraSpec = obj.payload
            if not (0 < cam.near < cam.far) or not (0 < cam.fva < 3.141592653589793):
                out.append(Diagnostic("error", obj.name, "invalid camera frustum"))
        if obj.kind == "rigid_body" and obj.name not in scene.styles:
            out.append(Diagnostic("warning", obj.name, "body has no render style"))
    return out


# ---------------------------------------------------------------------------
# serialization (bundle form: one document holding every section)


def _pose_to_dict(p: Pose) -> dict:
    return {
        "position": {"x": p.position[0], "y": p.position[1], "z": p.position[2]},
        "orientation": {
            "w": p.orientation[0], "x": p.orientation[1],
            "y": p.orientation[2], "z": p.orientation[3],
        },
    }


def _style_to_dict(s: RenderStyleSpec) -> dict:
    d = {"scope": s.scope, "style": s.style_name, "params": dict(s.params)}
    if s.target is not None:
        d["target"] = s.target
    return d


def _plugin_to_dict(p: PluginSpec) -> dict:
    d = {"name": p.name, "scope": p.scope, "params": dict(p.params)}
    if p.target is not None:
        d["target"] = p.target
    return d


def serialize_scene(scene: SceneDescription) -> dict:
    """Scene -> a single bundle document; parse_bundle inverts it."""
    world = {"gravity": {"x": scene.gravity[0], "y": scene.gravity[1], "z": scene.gravity[2]},
             "cameras": [], "lights": [],
             "shaders": {"styles": [_style_to_dict(s) for s in scene.style_decls
                                    if s.scope == "world"]},
             "plugins": [_plugin_to_dict(p) for p in scene.plugins if p.scope in ("world",)]}
    models: dict[str, dict] = {
        m: {"name": m, "bodies": [], "volumes": [], "joints": [], "styles": [], "plugins": []}
        for m in scene.model_names
    }
    for s in scene.style_decls:
        if s.scope == "model":
            models[s.target]["styles"].append(_style_to_dict(s))
        elif s.scope == "object":
            owner = scene.objects[s.target].model
            if owner in models:
                models[owner]["styles"].append(_style_to_dict(s))
            else:
                world["shaders"]["styles"].append(_style_to_dict(s))
    for p in scene.plugins:
        if p.scope == "model":
            models[p.target]["plugins"].append(_plugin_to_dict(p))
        elif p.scope == "object":
            owner = scene.objects[p.target].model
            if owner in models:
                models[owner]["plugins"].append(_plugin_to_dict(p))
    for obj in scene.objects.values():
        entry: dict = {"name": obj.name, "pose": _pose_to_dict(obj.pose)}
        if obj.parent is not None:
            entry["parent"] = obj.parent
        if obj.kind == "camera":
            c: CameraSpec = obj.payload
            entry.update(near=c.near, far=c.far, fva=c.fva, width=c.width, height=c.height)
            world["cameras"].append(entry)
        elif obj.kind == "light":
            li: LightSpec = obj.payload
            if li.direction is not None:
                entry["direction"] = {"x": li.direction[0], "y": li.direction[1],
                                      "z": li.direction[2]}
            world["lights"].append(entry)
        elif obj.kind == "rigid_body":
            b: BodySpec = obj.payload
            entry.update(primitive=b.primitive, radius=b.radius, length=b.length)
            if b.size is not None:
                entry["size"] = {"x": b.size[0], "y": b.size[1], "z": b.size[2]}
            if b.color is not None:
                entry["color"] = b.color
            if b.drill is not None:
                entry["drill"] = {
                    "tip_radius": b.drill.tip_radius,
                    "shaft_radius": b.drill.shaft_radius,
                    "shaft_cursors": b.drill.shaft_cursors,
                    "shaft_length": b.drill.shaft_length,
                }
            models[obj.model]["bodies"].append(entry)
        elif obj.kind == "volume":
            src: VolumeSource = obj.payload
            entry["source"] = {
                "prefix": src.prefix,
                "count": src.count,
                "format": src.fmt,
                "spacing": {"x": src.spacing[0], "y": src.spacing[1], "z": src.spacing[2]},
                "origin": _pose_to_dict(src.origin),
                "label_map": {
                    hexc: {"id": lid, "name": name} for hexc, (lid, name) in src.label_map.items()
                },
                "background": src.background,
            }
            models[obj.model]["volumes"].append(entry)
    for m in scene.model_names:
        models[m]["joints"] = [dict(j) for j in scene.joints]
        break  # joints are scene-global in the bundle; keep them on the first model
    bundle = {
        "world": world,
        "models": [models[m] for m in scene.model_names],
        "input_devices": {
            "devices": [
                {"name": d.name, "controls": d.controls, "channel": d.channel}
                for d in scene.devices
            ]
        },
        "plugins": [_plugin_to_dict(p) for p in scene.plugins if p.scope == "simulator"],
    }
    return bundle


def parse_bundle(bundle: dict) -> SceneDescription:
    """Parse a serialized bundle through the same collect + link phases."""
    scene = SceneDescription()
    scene.plugins.extend(
        _parse_plugins(bundle.get("plugins"), "simulator", "bundle", scene.warnings)
    )
    _parse_world(bundle.get("world") or {}, "bundle.world", scene)
    _parse_devices(bundle.get("input_devices") or {}, "bundle.input_devices", scene)
    for i, mdoc in enumerate(bundle.get("models") or []):
        _parse_model(mdoc, f"bundle.models[{i}]", mdoc.get("name", f"model{i}"), scene)
    _link_and_resolve(scene)
    return scene
