"""Plugin contract and the static in-process registry.

Plugins extend one of the four simulation scopes.  They see the world only
through the capability-checked context they receive at init; a failing
callback disables the plugin, never the simulation.
"""

from __future__ import annotations


class Plugin:
    """Base plugin: override any subset of the four callbacks."""

    def on_init(self, scope, scene) -> None:
        pass

    def on_physics_update(self, dt: float) -> None:
        pass

    def on_graphics_update(self, dt: float) -> None:
        pass

    def on_shutdown(self) -> None:
        pass


_REGISTRY: dict[str, type[Plugin]] = {}


def register_plugin_type(name: str, cls: type[Plugin]) -> None:
    _REGISTRY[name] = cls


def plugin_registered(name: str) -> bool:
    return name in _REGISTRY


def create_plugin(name: str) -> Plugin:
    return _REGISTRY[name]()


def registry_names() -> list[str]:
    return sorted(_REGISTRY)


class FrameCounter(Plugin):
    """Simulator-scope plugin: counts rendered frames."""

    def __init__(self):
        self.frames = 0

    def on_graphics_update(self, dt: float) -> None:
        self.frames += 1


class GravityToggle(Plugin):
    """World-scope plugin: zeroes gravity at init (the scope's capability demo)."""

    def on_init(self, scope, scene) -> None:
        scope.set_gravity((0.0, 0.0, 0.0))


class PoseProbe(Plugin):
    """Object-scope plugin: records its own object's pose each physics tick."""

    def __init__(self):
        self.history = []
        self._scope = None

    def on_init(self, scope, scene) -> None:
        self._scope = scope

    def on_physics_update(self, dt: float) -> None:
        if self._scope is not None:
            self.history.append(self._scope.get_object_pose(self._scope.target))


register_plugin_type("frame_counter", FrameCounter)
register_plugin_type("gravity_toggle", GravityToggle)
register_plugin_type("pose_probe", PoseProbe)
