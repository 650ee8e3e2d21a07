"""Synthetic demo scene: a segmented anatomy phantom (bone shell, inner
target, vessel) written as a slice stack plus the launch/world/model/
input-device files that load it.

The phantom occupies a cube of fixed physical size (0.128 m) regardless of
voxel count, so camera and trajectory geometry work at any resolution.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .pose import Pose
from .volume import VolumeSource, save_slices

PHYSICAL_SIZE = 0.128  # meters per cube edge

BONE_COLOR = "#E8D8B0"
TARGET_COLOR = "#C04040"
VESSEL_COLOR = "#4040D0"

LABEL_MAP = {
    BONE_COLOR: (1, "bone"),
    TARGET_COLOR: (2, "target"),
    VESSEL_COLOR: (3, "vessel"),
}


def make_anatomy_labels(n: int) -> np.ndarray:
    """[z, y, x] label grid: bone shell + inner target blob + vessel tube."""
    idx = (np.arange(n) + 0.5) / n - 0.5  # centered, in cube units
    z, y, x = np.meshgrid(idx, idx, idx, indexing="ij")
    r = np.sqrt(x * x + y * y + z * z)
    lab = np.zeros((n, n, n), dtype=np.uint8)
    outer, inner = 0.375, 0.3125  # 0.048 m and 0.040 m at full size
    lab[(r <= outer) & (r >= inner)] = 1
    lab[r <= 0.09] = 2
    vessel = (np.sqrt((x - 0.16) ** 2 + (z - 0.0) ** 2) <= 0.03) & (np.abs(y) <= 0.28)
    lab[vessel & (lab == 0)] = 3
    return lab


def make_demo_scene(out_dir: str | Path, size: int = 256,
                    width: int = 640, height: int = 480) -> Path:
    """Write the full scene into `out_dir`; returns the launch file path."""
    out = Path(out_dir)
    (out / "slices").mkdir(parents=True, exist_ok=True)
    spacing = PHYSICAL_SIZE / size
    half = PHYSICAL_SIZE / 2.0
    labels = make_anatomy_labels(size)
    source = VolumeSource(
        prefix="slices/sl_",
        count=size,
        fmt="png",
        spacing=(spacing, spacing, spacing),
        origin=Pose((-half, -half, -half)),
        label_map=LABEL_MAP,
    )
    save_slices(labels, source, out)

    from .simloop import orbit_camera_pose

    cam_pose = orbit_camera_pose(0.0)
    world = {
        "gravity": {"x": 0.0, "y": 0.0, "z": -9.81},
        "cameras": [
            {
                "name": "main_camera",
                "pose": {
                    "position": {"x": cam_pose.position[0], "y": cam_pose.position[1],
                                 "z": cam_pose.position[2]},
                    "orientation": {"w": cam_pose.orientation[0], "x": cam_pose.orientation[1],
                                    "y": cam_pose.orientation[2], "z": cam_pose.orientation[3]},
                },
                "near": 0.05,
                "far": 2.0,
                "fva": 0.7853981633974483,
                "width": width,
                "height": height,
            }
        ],
        "lights": [
            {"name": "headlamp", "direction": {"x": 0.2, "y": 0.3, "z": -1.0}}
        ],
        "shaders": {
            "styles": [
                {"scope": "world", "style": "flat", "params": {"color": "#909090",
                                                               "label_id": 30}}
            ]
        },
    }
    model = {
        "name": "drill_kit",
        "bodies": [
            {
                "name": "drill",
                "primitive": "sphere",
                "radius": 0.002,
                "color": "#C0C0C0",
                "pose": {"position": {"x": 0.05, "y": 0.0, "z": 0.09}},
                "drill": {
                    "tip_radius": 0.002,
                    "shaft_radius": 0.0025,
                    "shaft_cursors": 5,
                    "shaft_length": 0.05,
                },
            }
        ],
        "volumes": [
            {
                "name": "anatomy",
                "pose": {"position": {"x": -half, "y": -half, "z": -half}},
                "source": {
                    "prefix": source.prefix,
                    "count": source.count,
                    "format": source.fmt,
                    "spacing": {"x": spacing, "y": spacing, "z": spacing},
                    "label_map": {
                        hexc: {"id": lid, "name": name}
                        for hexc, (lid, name) in LABEL_MAP.items()
                    },
                },
            }
        ],
        "styles": [
            {
                "scope": "object",
                "target": "drill",
                "style": "metal",
                "params": {"color": "#C0C0C0", "label_id": 32},
            }
        ],
    }
    devices = {
        "devices": [
            {"name": "stylus", "controls": "drill", "channel": "control_drill"},
            {"name": "head", "controls": "main_camera", "channel": "control_camera"},
        ]
    }
    launch = {
        "world": "world.yaml",
        "input_devices": "input_devices.yaml",
        "models": ["model.yaml"],
    }
    (out / "world.yaml").write_text(yaml.safe_dump(world))
    (out / "model.yaml").write_text(yaml.safe_dump(model))
    (out / "input_devices.yaml").write_text(yaml.safe_dump(devices))
    (out / "launch.yaml").write_text(yaml.safe_dump(launch))
    return out / "launch.yaml"
