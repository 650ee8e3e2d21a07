import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from drillsim.camera import CameraModel, Frustum
from drillsim.pose import Pose
from drillsim.render import RenderScene, render_view
from drillsim.volume import LabelInfo, VolumeSource, VoxelVolume, save_slices

sys.path.insert(0, str(Path(__file__).parent))


def make_block_volume(n=32, spacing=1e-3, origin=None, solid=True,
                      labels=None) -> VoxelVolume:
    """Cube volume, optionally fully occupied with label 1."""
    lab = np.zeros((n, n, n), dtype=np.uint8)
    if solid:
        lab[:] = 1
    table = labels or {1: LabelInfo("bone", (232, 216, 176)),
                       2: LabelInfo("dura", (192, 64, 64)),
                       3: LabelInfo("vessel", (64, 64, 208))}
    pose = origin or Pose((-n * spacing / 2, -n * spacing / 2, -n * spacing / 2))
    return VoxelVolume.from_labels(lab, (spacing,) * 3, pose, table)


def write_sim_scene(tmp_path, label3d, spacing=1e-3, cam_pose=None,
                    drill_pose=(0.05, 0.0, 0.09), width=160, height=120,
                    drill=None, extra_model=None):
    """Write a loadable scene around an arbitrary [z,y,x] label grid.
    Volume is centered at the world origin.  Returns the launch path."""
    from drillsim.simloop import orbit_camera_pose

    nz, ny, nx = label3d.shape
    half = (nx * spacing / 2, ny * spacing / 2, nz * spacing / 2)
    source = VolumeSource(
        prefix="slices/sl_", count=nz, fmt="png",
        spacing=(spacing,) * 3,
        label_map={"#E8D8B0": (1, "bone"), "#C04040": (2, "target"),
                   "#4040D0": (3, "vessel")},
    )
    (tmp_path / "slices").mkdir(exist_ok=True)
    save_slices(label3d, source, tmp_path)
    cam = cam_pose or orbit_camera_pose(0.0, radius=0.30)
    world = {
        "cameras": [{
            "name": "main_camera",
            "pose": {
                "position": dict(zip("xyz", cam.position)),
                "orientation": dict(zip("wxyz", cam.orientation)),
            },
            "near": 0.05, "far": 2.0, "fva": 0.7853981633974483,
            "width": width, "height": height,
        }],
        "lights": [{"name": "lamp", "direction": {"x": 0.0, "y": 0.2, "z": -1.0}}],
    }
    drill_cfg = drill or {"tip_radius": 0.002, "shaft_radius": 0.0025,
                          "shaft_cursors": 5, "shaft_length": 0.05}
    model = {
        "name": "kit",
        "bodies": [{
            "name": "drill", "primitive": "sphere", "radius": drill_cfg["tip_radius"],
            "pose": {"position": dict(zip("xyz", drill_pose))},
            "drill": drill_cfg,
        }],
        "volumes": [{
            "name": "anatomy",
            "pose": {"position": {"x": -half[0], "y": -half[1], "z": -half[2]}},
            "source": {
                "prefix": source.prefix, "count": source.count, "format": "png",
                "spacing": {"x": spacing, "y": spacing, "z": spacing},
                "label_map": {h: {"id": i, "name": n}
                              for h, (i, n) in source.label_map.items()},
            },
        }],
        "styles": [{"scope": "object", "target": "drill", "style": "metal",
                    "params": {"color": "#C0C0C0", "label_id": 32}}],
    }
    if extra_model:
        model.update(extra_model)
    devices = {"devices": [
        {"name": "stylus", "controls": "drill", "channel": "control_drill"},
        {"name": "head", "controls": "main_camera", "channel": "control_camera"},
    ]}
    (tmp_path / "world.yaml").write_text(yaml.safe_dump(world))
    (tmp_path / "model.yaml").write_text(yaml.safe_dump(model))
    (tmp_path / "input_devices.yaml").write_text(yaml.safe_dump(devices))
    (tmp_path / "launch.yaml").write_text(yaml.safe_dump({
        "world": "world.yaml", "input_devices": "input_devices.yaml",
        "models": ["model.yaml"],
    }))
    return tmp_path / "launch.yaml"


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the jitted kernels once up front so tests time the logic."""
    vol = make_block_volume(n=8)
    cam = CameraModel(Frustum.from_size(0.05, 2.0, 0.7853981633974483, 16, 12),
                      Pose((0.0, 0.0, 0.1)))
    render_view(RenderScene(volume=vol, prims=[]), cam)
    vol.remove_colliding_voxels((0.0, 0.0, 0.0), 2e-3, 0)
    vol.gradient_normal((0.0, 0.0, 0.0), fallback=(0, 0, 1))
    vol.sphere_blocked((0.0, 0.0, 0.0), 1e-3)
