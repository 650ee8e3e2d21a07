"""Perspective-camera mathematics.

Everything downstream (renderer, streaming, evaluation) derives from the
conventions fixed here:

- camera frame: x right, y up, viewing direction -z
- pixel (i, j) = (column, row), origin at the top-left image corner;
  pixel index i has its center at continuous image coordinate i + 0.5
- NDC: x = 2*(i+0.5)/W - 1, y = 1 - 2*(j+0.5)/H, depth mapped to [-1, 1]
- the depth buffer stores z01 = (ndc_z + 1)/2, quantized to 24 bits and
  packed into 4 one-byte channels (B3 kept zero when packing, honored
  when unpacking)
- rescaled points carry positive depth (distance along the view axis);
  negate z to return to the right-handed camera frame

The frustum maximum dimensions keep the source convention verbatim:
MD_x = 2 f tan(fva/2) (the vertical extent, fva being the vertical
field-view angle) and MD_y = MD_x * AR.  Normalization and rescaling use
the same axes, so the pairing cancels and round trips are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pose import Pose

DEPTH_SENTINEL = float("inf")
PACKED_SENTINEL = (255, 255, 255, 255)

_DEPTH_SCALE = float(1 << 24)


class DomainError(ValueError):
    """Input outside an operation's stated domain."""


class SingularProjection(ArithmeticError):
    """Homogeneous w collapsed below tolerance during unprojection."""


@dataclass(frozen=True)
class Frustum:
    near: float
    far: float
    fva: float  # vertical field-view angle, radians
    aspect: float  # width / height
    width: int
    height: int

    def __post_init__(self):
        if not (0.0 < self.near < self.far):
            raise DomainError(f"need 0 < near < far, got {self.near}, {self.far}")
        if not (0.0 < self.fva < math.pi):
            raise DomainError(f"fva must be in (0, pi), got {self.fva}")
        if self.width <= 0 or self.height <= 0:
            raise DomainError("image size must be positive")
        if abs(self.aspect - self.width / self.height) > 1e-9:
            raise DomainError(
                f"aspect {self.aspect} != width/height {self.width / self.height}"
            )

    @staticmethod
    def from_size(near: float, far: float, fva: float, width: int, height: int) -> "Frustum":
        return Frustum(near, far, fva, width / height, width, height)


@dataclass(frozen=True)
class MaxDims:
    md_x: float
    md_y: float
    md_z: float


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class CameraModel:
    frustum: Frustum
    pose: Pose


@dataclass(frozen=True)
class StereoRig:
    left: CameraModel
    right: CameraModel
    baseline: float

    @property
    def right_from_left(self) -> Pose:
        """Pose of the right camera expressed in the left camera frame."""
        return Pose((self.baseline, 0.0, 0.0))


def max_dims(fr: Frustum) -> MaxDims:
    mdx = 2.0 * fr.far * math.tan(fr.fva / 2.0)
    return MaxDims(mdx, mdx * fr.aspect, fr.far - fr.near)


def intrinsics(fr: Frustum) -> Intrinsics:
    f = fr.height / (2.0 * math.tan(fr.fva / 2.0))
    return Intrinsics(f, f, fr.width / 2.0, fr.height / 2.0)


def projection_matrix(fr: Frustum) -> np.ndarray:
    """Right-handed perspective matrix, camera looking down -z, ndc_z in [-1,1]."""
    t = math.tan(fr.fva / 2.0)
    n, f = fr.near, fr.far
    return np.array(
        [
            [1.0 / (fr.aspect * t), 0.0, 0.0, 0.0],
            [0.0, 1.0 / t, 0.0, 0.0],
            [0.0, 0.0, -(f + n) / (f - n), -2.0 * f * n / (f - n)],
            [0.0, 0.0, -1.0, 0.0],
        ]
    )


def inverse_projection_matrix(fr: Frustum) -> np.ndarray:
    """Exact analytic inverse of projection_matrix (no numeric inversion)."""
    t = math.tan(fr.fva / 2.0)
    n, f = fr.near, fr.far
    a = (f + n) / (f - n)
    b = 2.0 * f * n / (f - n)
    return np.array(
        [
            [fr.aspect * t, 0.0, 0.0, 0.0],
            [0.0, t, 0.0, 0.0],
            [0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, -1.0 / b, a / b],
        ]
    )


def project_points(points, fr: Frustum):
    """Camera-space points (x right, y up, z negative ahead) -> (u, v, z01).

    u, v are continuous image coordinates (pixel index + 0.5 at centers).
    """
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    m = projection_matrix(fr)
    h = np.concatenate([p, np.ones((p.shape[0], 1))], axis=1) @ m.T
    w = h[:, 3]
    ndc = h[:, :3] / w[:, None]
    u = (ndc[:, 0] + 1.0) * fr.width / 2.0
    v = (1.0 - ndc[:, 1]) * fr.height / 2.0
    z01 = (ndc[:, 2] + 1.0) / 2.0
    return np.stack([u, v, z01], axis=1)


def project_pinhole(points, fr: Frustum):
    """Pinhole projection with the centered intrinsics; must agree with
    project_points to float precision (this agreement pins the NDC choice)."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    k = intrinsics(fr)
    d = -p[:, 2]
    u = k.cx + k.fx * p[:, 0] / d
    v = k.cy - k.fy * p[:, 1] / d
    return np.stack([u, v], axis=1)


def pack_depth(z01):
    """z01 in [0, 1) -> 4 one-byte channels (..., 4) uint8, B3 always 0."""
    z = np.asarray(z01, dtype=np.float64)
    if np.any(z < 0.0) or np.any(z >= 1.0):
        raise DomainError("depth value outside [0, 1)")
    zi = np.minimum(np.rint(z * _DEPTH_SCALE).astype(np.int64), (1 << 24) - 1)
    out = np.empty(z.shape + (4,), dtype=np.uint8)
    out[..., 0] = zi & 0xFF
    out[..., 1] = (zi >> 8) & 0xFF
    out[..., 2] = (zi >> 16) & 0xFF
    out[..., 3] = 0
    return out


def unpack_depth(packed):
    """4 one-byte channels -> z01 = ((B3<<24)|(B2<<16)|(B1<<8)|B0) / 2^24."""
    b = np.asarray(packed, dtype=np.uint64)
    z = (b[..., 3] << 24) | (b[..., 2] << 16) | (b[..., 1] << 8) | b[..., 0]
    return z.astype(np.float64) / _DEPTH_SCALE


def unproject_fragment(frag_x, frag_y, z01, fr: Frustum):
    """Fragment pixel indices + depth-buffer value -> normalized point N.

    Chain: pixel -> NDC -> inverse projection -> divide by w ->
    N_xy = (P_cam.xy + MD_xy/2) / MD_xy, N_z = (depth - n) / (f - n).
    """
    fx = np.asarray(frag_x, dtype=np.float64)
    fy = np.asarray(frag_y, dtype=np.float64)
    z = np.asarray(z01, dtype=np.float64)
    fx, fy, z = np.broadcast_arrays(fx, fy, z)
    ndc = np.stack(
        [
            2.0 * (fx + 0.5) / fr.width - 1.0,
            1.0 - 2.0 * (fy + 0.5) / fr.height,
            2.0 * z - 1.0,
            np.ones_like(z),
        ],
        axis=-1,
    )
    h = ndc @ inverse_projection_matrix(fr).T
    w = h[..., 3]
    if np.any(np.abs(w) < 1e-12):
        raise SingularProjection("homogeneous w below 1e-12")
    cam = h[..., :3] / w[..., None]
    depth = -cam[..., 2]
    md = max_dims(fr)
    n = np.empty_like(cam)
    n[..., 0] = (cam[..., 0] + md.md_x / 2.0) / md.md_x
    n[..., 1] = (cam[..., 1] + md.md_y / 2.0) / md.md_y
    n[..., 2] = (depth - fr.near) / (fr.far - fr.near)
    return n


def rescale_points(n, fr: Frustum):
    """Normalized points -> camera-space meters (x right, y up, z = +depth)."""
    a = np.asarray(n, dtype=np.float64)
    md = max_dims(fr)
    out = np.empty_like(a)
    out[..., 0] = a[..., 0] * md.md_x - md.md_x / 2.0
    out[..., 1] = a[..., 1] * md.md_y - md.md_y / 2.0
    out[..., 2] = fr.near + a[..., 2] * (fr.far - fr.near)
    return out


def build_stereo_rig(center_pose: Pose, fr: Frustum, baseline: float) -> StereoRig:
    """Rectified rig: eyes offset +-baseline/2 along the camera +x axis."""
    if baseline < 0.0:
        raise DomainError("baseline must be >= 0")
    ax = center_pose.x_axis()
    half = baseline / 2.0
    cx, cy, cz = center_pose.position
    left = Pose((cx - half * ax[0], cy - half * ax[1], cz - half * ax[2]),
                center_pose.orientation)
    right = Pose((cx + half * ax[0], cy + half * ax[1], cz + half * ax[2]),
                 center_pose.orientation)
    return StereoRig(CameraModel(fr, left), CameraModel(fr, right), baseline)


def pixel_ray_dirs(fr: Frustum) -> np.ndarray:
    """Unit ray directions through every pixel center, camera frame, (H, W, 3)."""
    t = math.tan(fr.fva / 2.0)
    i = np.arange(fr.width, dtype=np.float64)
    j = np.arange(fr.height, dtype=np.float64)
    x_ndc = 2.0 * (i + 0.5) / fr.width - 1.0
    y_ndc = 1.0 - 2.0 * (j + 0.5) / fr.height
    dx = x_ndc * fr.aspect * t
    dy = y_ndc * t
    d = np.empty((fr.height, fr.width, 3), dtype=np.float64)
    d[:, :, 0] = dx[None, :]
    d[:, :, 1] = dy[:, None]
    d[:, :, 2] = -1.0
    d /= np.linalg.norm(d, axis=2, keepdims=True)
    return d


def camera_info(cam: CameraModel, baseline: float, right_from_left: Pose) -> dict:
    """Camera-parameters message body (intrinsics + frustum + stereo extrinsics)."""
    k = intrinsics(cam.frustum)
    fr = cam.frustum
    return {
        "width": fr.width,
        "height": fr.height,
        "fx": k.fx,
        "fy": k.fy,
        "cx": k.cx,
        "cy": k.cy,
        "near": fr.near,
        "far": fr.far,
        "fva": fr.fva,
        "baseline": baseline,
        "right_from_left": {
            "position": list(right_from_left.position),
            "orientation": list(right_from_left.orientation),
        },
    }
