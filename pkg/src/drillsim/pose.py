"""Rigid-body poses and quaternion algebra.

Quaternions are stored (w, x, y, z), unit norm, and canonicalized so that
w >= 0 (on the w = 0 great circle the first nonzero component is made
positive).  Canonical form gives every rotation exactly one representation,
which the record/replay machinery relies on for bit-exact comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

UNIT_TOL = 1e-9


def _canonical_quat(w: float, x: float, y: float, z: float) -> tuple[float, float, float, float]:
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n < UNIT_TOL:
        raise ValueError("quaternion norm is zero")
    w, x, y, z = w / n, x / n, y / n, z / n
    if w < 0.0 or (w == 0.0 and (x < 0.0 or (x == 0.0 and (y < 0.0 or (y == 0.0 and z < 0.0))))):
        w, x, y, z = -w, -x, -y, -z
    return w, x, y, z


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_rotate(q, v):
    """Rotate vector v by unit quaternion q."""
    w, x, y, z = q
    vx, vy, vz = float(v[0]), float(v[1]), float(v[2])
    # t = 2 u x v ; v' = v + w t + u x t
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=np.float64,
    )


def quat_from_euler_xyz(roll: float, pitch: float, yaw: float):
    """Fixed-axis XYZ Euler angles (radians) -> quaternion (w,x,y,z)."""
    qx = (math.cos(roll / 2), math.sin(roll / 2), 0.0, 0.0)
    qy = (math.cos(pitch / 2), 0.0, math.sin(pitch / 2), 0.0)
    qz = (math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2))
    return quat_mul(qz, quat_mul(qy, qx))


def quat_to_euler_xyz(q) -> tuple[float, float, float]:
    w, x, y, z = q
    sinp = 2.0 * (w * y - z * x)
    sinp = max(-1.0, min(1.0, sinp))
    roll = math.atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    pitch = math.asin(sinp)
    yaw = math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return roll, pitch, yaw


def quat_slerp(a, b, u: float):
    """Spherical interpolation between unit quaternions, shortest arc."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    dot = aw * bw + ax * bx + ay * by + az * bz
    if dot < 0.0:
        bw, bx, by, bz = -bw, -bx, -by, -bz
        dot = -dot
    if dot > 1.0 - 1e-12:
        # nearly parallel: linear blend then renormalize
        return _canonical_quat(
            aw + u * (bw - aw), ax + u * (bx - ax), ay + u * (by - ay), az + u * (bz - az)
        )
    theta = math.acos(min(1.0, dot))
    s = math.sin(theta)
    ka = math.sin((1.0 - u) * theta) / s
    kb = math.sin(u * theta) / s
    return _canonical_quat(
        ka * aw + kb * bw, ka * ax + kb * bx, ka * ay + kb * by, ka * az + kb * bz
    )


def quat_angle(a, b) -> float:
    """Geodesic angle (radians) between two unit quaternions."""
    dot = abs(a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3])
    return 2.0 * math.acos(min(1.0, dot))


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotate by `orientation`, then translate by `position`."""

    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        p = tuple(float(c) for c in self.position)
        q = _canonical_quat(*(float(c) for c in self.orientation))
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_euler(position, rpy) -> "Pose":
        return Pose(tuple(position), quat_from_euler_xyz(*rpy))

    def euler_xyz(self) -> tuple[float, float, float]:
        return quat_to_euler_xyz(self.orientation)

    def compose(self, other: "Pose") -> "Pose":
        """self o other (apply `other` first, then self)."""
        p = quat_rotate(self.orientation, other.position)
        return Pose(
            (self.position[0] + p[0], self.position[1] + p[1], self.position[2] + p[2]),
            quat_mul(self.orientation, other.orientation),
        )

    def inverse(self) -> "Pose":
        w, x, y, z = self.orientation
        qinv = (w, -x, -y, -z)
        p = quat_rotate(qinv, self.position)
        return Pose((-p[0], -p[1], -p[2]), qinv)

    def apply(self, point) -> tuple[float, float, float]:
        r = quat_rotate(self.orientation, point)
        return (r[0] + self.position[0], r[1] + self.position[1], r[2] + self.position[2])

    def rotate(self, vec) -> tuple[float, float, float]:
        return quat_rotate(self.orientation, vec)

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix()
        m[:3, 3] = self.position
        return m

    def x_axis(self):
        return quat_rotate(self.orientation, (1.0, 0.0, 0.0))

    def y_axis(self):
        return quat_rotate(self.orientation, (0.0, 1.0, 0.0))

    def z_axis(self):
        return quat_rotate(self.orientation, (0.0, 0.0, 1.0))

    def position_array(self) -> np.ndarray:
        return np.array(self.position, dtype=np.float64)


def pose_interpolate(a: Pose, b: Pose, u: float) -> Pose:
    """Linear position blend + slerp orientation, u in [0, 1]."""
    pa, pb = a.position, b.position
    pos = tuple(pa[i] + u * (pb[i] - pa[i]) for i in range(3))
    return Pose(pos, quat_slerp(a.orientation, b.orientation, u))


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera pose at `eye` looking at `target` (camera looks down its -z)."""
    eye = np.asarray(eye, dtype=np.float64)
    f = np.asarray(target, dtype=np.float64) - eye
    nf = np.linalg.norm(f)
    if nf < UNIT_TOL:
        raise ValueError("eye and target coincide")
    f = f / nf
    upv = np.asarray(up, dtype=np.float64)
    r = np.cross(f, upv)
    nr = np.linalg.norm(r)
    if nr < UNIT_TOL:
        raise ValueError("view direction parallel to up vector")
    r = r / nr
    u = np.cross(r, f)
    m = np.stack([r, u, -f], axis=1)
    return Pose(tuple(eye), quat_from_matrix(m))


def quat_from_matrix(m: np.ndarray):
    """Rotation matrix -> quaternion (w,x,y,z), Shepperd's method."""
    t = m[0, 0] + m[1, 1] + m[2, 2]
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        w = 0.25 * s
        x = (m[2, 1] - m[1, 2]) / s
        y = (m[0, 2] - m[2, 0]) / s
        z = (m[1, 0] - m[0, 1]) / s
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        w = (m[2, 1] - m[1, 2]) / s
        x = 0.25 * s
        y = (m[0, 1] + m[1, 0]) / s
        z = (m[0, 2] + m[2, 0]) / s
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        w = (m[0, 2] - m[2, 0]) / s
        x = (m[0, 1] + m[1, 0]) / s
        y = 0.25 * s
        z = (m[1, 2] + m[2, 1]) / s
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        w = (m[1, 0] - m[0, 1]) / s
        x = (m[0, 2] + m[2, 0]) / s
        y = (m[1, 2] + m[2, 1]) / s
        z = 0.25 * s
    return _canonical_quat(w, x, y, z)
