"""Ground-truth evaluation of externally produced estimates.

Pose error per matched frame: translation is the L1 norm of the position
difference in millimeters (L2 also reported, clearly labeled); rotation is
the geodesic angle between orientations in degrees (a per-axis Euler L1 sum
is also reported).  Statistics are population mean/std over exactly the
matched frames; frames present in the ground truth but missing from the
estimate count as tracking failures.

Depth error: mean absolute difference in millimeters over pixels valid in
both maps (+inf marks no-hit), per frame and pooled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pose import Pose, quat_angle, quat_to_euler_xyz
from . import streaming as st


class EvalError(Exception):
    pass


class NoMatchedFrames(EvalError):
    pass


class ResolutionMismatch(EvalError):
    pass


@dataclass
class TrajectoryEstimate:
    poses: dict[int, Pose]  # frame_id -> pose

    def __post_init__(self):
        ids = list(self.poses)
        if ids != sorted(ids) or len(ids) != len(set(ids)):
            self.poses = {k: self.poses[k] for k in sorted(set(ids))}


@dataclass
class ErrorReport:
    translation_mean_mm: float
    translation_std_mm: float
    rotation_mean_deg: float
    rotation_std_deg: float
    n_evaluated: int
    n_missing: int
    translation_l2_mean_mm: float = 0.0
    translation_l2_std_mm: float = 0.0
    rotation_euler_mean_deg: float = 0.0
    rotation_euler_std_deg: float = 0.0
    per_frame: list = field(default_factory=list)  # (frame_id, t_l1_mm, rot_deg)

    def summary(self) -> dict:
        return {
            "translation_mm": {"mean": self.translation_mean_mm,
                               "std": self.translation_std_mm, "norm": "L1"},
            "translation_l2_mm": {"mean": self.translation_l2_mean_mm,
                                  "std": self.translation_l2_std_mm},
            "rotation_deg": {"mean": self.rotation_mean_deg,
                             "std": self.rotation_std_deg, "metric": "geodesic"},
            "rotation_euler_l1_deg": {"mean": self.rotation_euler_mean_deg,
                                      "std": self.rotation_euler_std_deg},
            "n_evaluated": self.n_evaluated,
            "n_missing": self.n_missing,
        }


def load_estimates(path: str | Path) -> TrajectoryEstimate:
    """One line per frame: `frame_id tx ty tz qw qx qy qz` (meters, unit quat)."""
    poses = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        fid = int(parts[0])
        v = [float(x) for x in parts[1:8]]
        poses[fid] = Pose((v[0], v[1], v[2]), (v[3], v[4], v[5], v[6]))
    return TrajectoryEstimate(poses)


def save_estimates(est: TrajectoryEstimate, path: str | Path):
    lines = [
        f"{fid} " + " ".join(f"{c:.17g}" for c in (*p.position, *p.orientation))
        for fid, p in est.poses.items()
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def recording_poses(path: str | Path, object_name: str) -> dict[int, Pose]:
    """frame_id -> pose of one object from a recording's pose topic."""
    reader = st.RecordingReader(path)
    out: dict[int, Pose] = {}
    for msg in reader.messages():
        if msg.topic_id != st.POSE:
            continue
        name, pose = st.decode_pose(msg)
        fid = msg.header.get("frame_id")
        if name == object_name and fid is not None:
            out[fid] = pose
    return out


def recording_depths(path: str | Path) -> dict[int, np.ndarray]:
    reader = st.RecordingReader(path)
    out: dict[int, np.ndarray] = {}
    for msg in reader.messages():
        if msg.topic_id == st.DEPTH:
            out[msg.header["frame_id"]] = st.decode_image(msg)
    return out


def _stats(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())  # population std


def pose_error(gt: dict[int, Pose], est: TrajectoryEstimate,
               alignment: str = "none") -> ErrorReport:
    """Compare an estimated trajectory against ground-truth poses.

    alignment="first_frame" pre-composes the estimate with the transform
    taking its first pose onto the ground truth's."""
    matched = sorted(set(gt) & set(est.poses))
    if not matched:
        raise NoMatchedFrames("no frame ids in common")
    n_missing = len(set(gt) - set(est.poses))

    est_poses = dict(est.poses)
    if alignment == "first_frame":
        first = matched[0]
        correction = gt[first].compose(est_poses[first].inverse())
        est_poses = {fid: correction.compose(p) for fid, p in est_poses.items()}
    elif alignment != "none":
        raise EvalError(f"unknown alignment {alignment!r}")

    t_l1, t_l2, r_geo, r_euler, per_frame = [], [], [], [], []
    for fid in matched:
        g, e = gt[fid], est_poses[fid]
        d = np.array(g.position) - np.array(e.position)
        l1 = float(np.abs(d).sum()) * 1000.0
        l2 = float(np.linalg.norm(d)) * 1000.0
        ang = math.degrees(quat_angle(g.orientation, e.orientation))
        rel = g.inverse().compose(e)
        euler = sum(abs(math.degrees(a)) for a in quat_to_euler_xyz(rel.orientation))
        t_l1.append(l1)
        t_l2.append(l2)
        r_geo.append(ang)
        r_euler.append(euler)
        per_frame.append((fid, l1, ang))

    tm, ts = _stats(t_l1)
    lm, ls = _stats(t_l2)
    rm, rs = _stats(r_geo)
    em, es = _stats(r_euler)
    return ErrorReport(
        translation_mean_mm=tm, translation_std_mm=ts,
        rotation_mean_deg=rm, rotation_std_deg=rs,
        n_evaluated=len(matched), n_missing=n_missing,
        translation_l2_mean_mm=lm, translation_l2_std_mm=ls,
        rotation_euler_mean_deg=em, rotation_euler_std_deg=es,
        per_frame=per_frame,
    )


def format_report(report: ErrorReport) -> str:
    """Tabular mean-and-standard-deviation layout ("40.97 ± 22.40" style)."""
    lines = [
        "Translation Error (mm) | Rotation Error (deg)",
        f"{report.translation_mean_mm:.2f} ± {report.translation_std_mm:.2f}"
        f" | {report.rotation_mean_deg:.2f} ± {report.rotation_std_deg:.2f}",
        f"frames evaluated: {report.n_evaluated}, missing: {report.n_missing}",
        f"[L2 translation: {report.translation_l2_mean_mm:.2f} ± "
        f"{report.translation_l2_std_mm:.2f} mm; Euler-sum rotation: "
        f"{report.rotation_euler_mean_deg:.2f} ± {report.rotation_euler_std_deg:.2f} deg]",
    ]
    return "\n".join(lines)


@dataclass
class DepthReport:
    l1_mean_mm: float
    per_frame: list  # (frame_id, l1_mm, coverage)
    coverage: float

    def summary(self) -> dict:
        return {
            "l1_mean_mm": self.l1_mean_mm,
            "coverage": self.coverage,
            "per_frame": [
                {"frame_id": f, "l1_mm": e, "coverage": c} for f, e, c in self.per_frame
            ],
        }


def depth_error(gt: dict[int, np.ndarray], est: dict[int, np.ndarray]) -> DepthReport:
    """Mean absolute depth difference (mm) over mutually valid pixels."""
    matched = sorted(set(gt) & set(est))
    if not matched:
        raise NoMatchedFrames("no frame ids in common")
    per_frame = []
    total_abs = 0.0
    total_n = 0
    total_pixels = 0
    for fid in matched:
        a = np.asarray(gt[fid], dtype=np.float64)
        b = np.asarray(est[fid], dtype=np.float64)
        if a.shape != b.shape:
            raise ResolutionMismatch(f"frame {fid}: {a.shape} vs {b.shape}")
        valid = np.isfinite(a) & np.isfinite(b)
        n = int(valid.sum())
        err = float(np.abs(a[valid] - b[valid]).sum()) * 1000.0 if n else 0.0
        per_frame.append((fid, err / n if n else float("nan"), n / a.size))
        total_abs += err
        total_n += n
        total_pixels += a.size
    return DepthReport(
        l1_mean_mm=total_abs / total_n if total_n else float("nan"),
        per_frame=per_frame,
        coverage=total_n / total_pixels if total_pixels else 0.0,
    )


def write_summary(path: str | Path, summary: dict):
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
