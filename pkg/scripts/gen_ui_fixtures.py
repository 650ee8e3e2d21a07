#!/usr/bin/env python3
"""Regenerate the binary protocol fixtures the frontend tests decode.
The files are committed; rerun only when the wire format changes."""

import json
from pathlib import Path

import numpy as np

import drillsim.streaming as st
from drillsim.pose import Pose
from drillsim.render import PointCloud

OUT = Path(__file__).resolve().parent.parent / "frontend" / "test" / "fixtures"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    meta = {}

    img = np.arange(4 * 3 * 3, dtype=np.uint8).reshape(3, 4, 3)
    msg = st.image_message(st.COLOR_LEFT, img, 123_000_000, 7, "rgb8")
    (OUT / "image_msg.bin").write_bytes(st.encode_message(msg))
    meta["image"] = {"w": 4, "h": 3, "frame_id": 7, "timestamp_ns": 123000000,
                     "first_pixel": [0, 1, 2], "last_pixel": [33, 34, 35]}

    depth = np.array([[0.25, 0.5], [1.0, np.inf]], dtype=np.float32)
    (OUT / "depth_msg.bin").write_bytes(st.encode_message(st.depth_message(depth, 5, 2)))
    meta["depth"] = {"w": 2, "h": 2, "values": [0.25, 0.5, 1.0, None]}

    seg = np.array([[0, 1], [2, 32]], dtype=np.uint8)
    (OUT / "seg_msg.bin").write_bytes(
        st.encode_message(st.image_message(st.SEG, seg, 5, 2, "label8")))
    meta["seg"] = {"w": 2, "h": 2, "labels": [0, 1, 2, 32]}

    pc = PointCloud(
        xyz=np.array([[0.1, -0.2, 0.3], [1.5, 2.5, 3.5]], dtype=np.float32),
        rgb=np.array([[255, 0, 0], [0, 255, 0]], dtype=np.uint8),
        label=np.array([1, 32], dtype=np.uint8),
        pixel=np.array([[0, 0], [1, 0]], dtype=np.uint32),
    )
    (OUT / "cloud_msg.bin").write_bytes(st.encode_message(st.cloud_message(pc, 9, 3)))
    meta["cloud"] = {"count": 2, "xyz0": [0.1, -0.2, 0.3], "rgb1": [0, 255, 0],
                     "labels": [1, 32]}

    pose = Pose((0.5, -0.25, 0.125), (0.9238795325112867, 0.0, 0.3826834323650898, 0.0))
    (OUT / "pose_msg.bin").write_bytes(
        st.encode_message(st.pose_message("drill", pose, 11, 4)))
    meta["pose"] = {"object": "drill", "position": list(pose.position),
                    "orientation": list(pose.orientation)}

    info = {"width": 640, "height": 480, "fx": 579.4112549695428, "fy": 579.4112549695428,
            "cx": 320.0, "cy": 240.0, "near": 0.05, "far": 2.0,
            "fva": 0.7853981633974483, "baseline": 0.065,
            "right_from_left": {"position": [0.065, 0.0, 0.0],
                                "orientation": [1.0, 0.0, 0.0, 0.0]}}
    (OUT / "caminfo_msg.bin").write_bytes(
        st.encode_message(st.camera_info_message("left", info, 13, 5)))
    meta["caminfo"] = {k: info[k] for k in ("width", "height", "fx", "baseline", "near", "far")}

    (OUT / "force_msg.bin").write_bytes(
        st.encode_message(st.force_message(42, (0.5, -0.25, 0.125), True, 3, 15)))
    meta["force"] = {"tick": 42, "force": [0.5, -0.25, 0.125], "contact": True, "s_max": 3}

    ctrl_pose = Pose((0.01, 0.02, 0.03))
    (OUT / "control_drill_ref.bin").write_bytes(
        st.encode_message(st.control_drill_message(5, ctrl_pose, True, 0)))
    meta["control_drill"] = {"t": 5, "position": [0.01, 0.02, 0.03],
                             "orientation": [1.0, 0.0, 0.0, 0.0], "drilling": True}

    ctrl_cam = Pose((0.0, -0.1, 0.2))
    (OUT / "control_camera_ref.bin").write_bytes(
        st.encode_message(st.control_camera_message(6, ctrl_cam, 0)))
    meta["control_camera"] = {"t": 6, "position": [0.0, -0.1, 0.2]}

    (OUT / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    print(f"fixtures written to {OUT}")


if __name__ == "__main__":
    main()
