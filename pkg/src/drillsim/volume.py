"""The drillable patient model: a dense voxel grid of intensity + anatomy
labels with a world pose and per-axis spacing.

Conventions fixed here and relied on everywhere else:

- voxel (i, j, k) spans the local box [i*sx, (i+1)*sx) x ... ; the volume
  origin pose is the world pose of the (0,0,0) voxel *corner*
- storage is a flat dense array, x-fastest: flat = i + nx*(j + ny*k)
- a point maps to the voxel with the nearest center; ties on shared faces
  round toward the lower index (deterministic: index = ceil(x/s) - 1)
- occupancy predicate: label != 0 (equivalently intensity > 0; the two are
  kept in lockstep)

An 8^3 brick occupancy map (per-brick occupied-voxel counts) is maintained
incrementally by edits so the renderer can skip empty space.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numba import njit
from PIL import Image

from .pose import Pose

BRICK = 8

_EDIT_HEAD = struct.Struct("<QI")
_EDIT_VOXEL_DTYPE = np.dtype(
    [("x", "<u4"), ("y", "<u4"), ("z", "<u4"), ("prior_intensity", "u1"), ("prior_label", "u1")]
)


class VolumeError(Exception):
    pass


class MissingSlice(VolumeError):
    def __init__(self, index: int, path: str = ""):
        self.index = index
        self.path = path
        super().__init__(f"slice {index} missing" + (f": {path}" if path else ""))


class InconsistentSliceSize(VolumeError):
    pass


class UnmappedColor(VolumeError):
    def __init__(self, color: tuple[int, int, int], slice_index: int, pixel: tuple[int, int]):
        self.color = color
        self.slice_index = slice_index
        self.pixel = pixel
        super().__init__(
            f"color #{color[0]:02X}{color[1]:02X}{color[2]:02X} at slice {slice_index} "
            f"pixel {pixel} is not in the label map"
        )


class LabelInfo(NamedTuple):
    name: str
    color: tuple[int, int, int]


class SampleResult(NamedTuple):
    occupied: bool
    label: int


@dataclass
class VolumeSource:
    """Slice-stack descriptor: where the images are and what the colors mean."""

    prefix: str
    count: int
    fmt: str = "png"
    spacing: tuple[float, float, float] = (1e-3, 1e-3, 1e-3)
    origin: Pose = field(default_factory=Pose)
    label_map: dict[str, tuple[int, str]] = field(default_factory=dict)  # "#RRGGBB" -> (id, name)
    background: str = "#000000"

    def slice_path(self, k: int) -> str:
        return f"{self.prefix}{k:04d}.{self.fmt}"


@dataclass
class VoxelEdit:
    """Record of one removal: voxel indices with their prior values.

    Applying then reverting restores the volume bit-exactly.
    """

    tick: int
    indices: np.ndarray  # (M, 3) uint32, columns x, y, z
    prior_intensity: np.ndarray  # (M,) float32
    prior_label: np.ndarray  # (M,) uint8

    @property
    def count(self) -> int:
        return int(self.indices.shape[0])

    def encode(self) -> bytes:
        head = _EDIT_HEAD.pack(self.tick, self.count)
        rec = np.empty(self.count, dtype=_EDIT_VOXEL_DTYPE)
        rec["x"] = self.indices[:, 0]
        rec["y"] = self.indices[:, 1]
        rec["z"] = self.indices[:, 2]
        rec["prior_intensity"] = np.rint(self.prior_intensity * 255.0).astype(np.uint8)
        rec["prior_label"] = self.prior_label
        return head + rec.tobytes()

    @staticmethod
    def decode(data: bytes) -> "VoxelEdit":
        tick, count = _EDIT_HEAD.unpack_from(data, 0)
        rec = np.frombuffer(data, dtype=_EDIT_VOXEL_DTYPE, count=count, offset=_EDIT_HEAD.size)
        idx = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.uint32)
        return VoxelEdit(
            tick=tick,
            indices=idx,
            prior_intensity=rec["prior_intensity"].astype(np.float32) / 255.0,
            prior_label=rec["prior_label"].copy(),
        )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, VoxelEdit)
            and self.tick == other.tick
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.prior_intensity, other.prior_intensity)
            and np.array_equal(self.prior_label, other.prior_label)
        )


def parse_color_hex(s: str) -> tuple[int, int, int]:
    s = s.lstrip("#")
    if len(s) != 6:
        raise ValueError(f"bad color literal {s!r}")
    return (int(s[0:2], 16), int(s[2:4], 16), int(s[4:6], 16))


@njit(cache=True)
def _containing_index(u):
    # voxel containing coordinate u (voxel units); shared faces go to the
    # lower index
    return int(np.ceil(u)) - 1


@njit(cache=True)
def _trilinear(intensity, nx, ny, nz, cx, cy, cz):
    # c* are center-lattice coordinates (voxel center i sits at c = i);
    # everything outside the grid reads as 0 (air)
    ix = int(np.floor(cx))
    iy = int(np.floor(cy))
    iz = int(np.floor(cz))
    fx = cx - ix
    fy = cy - iy
    fz = cz - iz
    acc = 0.0
    for dz in range(2):
        kz = iz + dz
        if kz < 0 or kz >= nz:
            continue
        wz = fz if dz == 1 else 1.0 - fz
        for dy in range(2):
            ky = iy + dy
            if ky < 0 or ky >= ny:
                continue
            wy = fy if dy == 1 else 1.0 - fy
            for dx in range(2):
                kx = ix + dx
                if kx < 0 or kx >= nx:
                    continue
                wx = fx if dx == 1 else 1.0 - fx
                acc += wz * wy * wx * intensity[kx + nx * (ky + ny * kz)]
    return acc


@njit(cache=True)
def _gradient(intensity, nx, ny, nz, sx, sy, sz, cx, cy, cz):
    # bare +-1 voxel central difference; cheap, used for shading
    gx = (
        _trilinear(intensity, nx, ny, nz, cx + 1.0, cy, cz)
        - _trilinear(intensity, nx, ny, nz, cx - 1.0, cy, cz)
    ) / (2.0 * sx)
    gy = (
        _trilinear(intensity, nx, ny, nz, cx, cy + 1.0, cz)
        - _trilinear(intensity, nx, ny, nz, cx, cy - 1.0, cz)
    ) / (2.0 * sy)
    gz = (
        _trilinear(intensity, nx, ny, nz, cx, cy, cz + 1.0)
        - _trilinear(intensity, nx, ny, nz, cx, cy, cz - 1.0)
    ) / (2.0 * sz)
    return gx, gy, gz


def _make_gradient_window(reach: float, step: float, sigma: float):
    """Gaussian averaging window (voxel units) for surface-normal estimates.

    A binary voxel surface is a staircase of axis-aligned faces; the raw
    trilinear gradient inherits that jaggedness, so the normal query smooths
    the field over a few voxels before differencing."""
    ticks = np.arange(-reach, reach + 1e-9, step)
    offs = np.stack(np.meshgrid(ticks, ticks, ticks, indexing="ij"), axis=-1).reshape(-1, 3)
    w = np.exp(-np.sum(offs * offs, axis=1) / (2.0 * sigma * sigma))
    return np.ascontiguousarray(offs), np.ascontiguousarray(w / w.sum())


_GRAD_OFFS, _GRAD_WEIGHTS = _make_gradient_window(reach=3.0, step=1.5, sigma=1.8)


@njit(cache=True)
def _smoothed_value(intensity, nx, ny, nz, cx, cy, cz, offs, weights):
    acc = 0.0
    for m in range(offs.shape[0]):
        acc += weights[m] * _trilinear(
            intensity, nx, ny, nz, cx + offs[m, 0], cy + offs[m, 1], cz + offs[m, 2]
        )
    return acc


@njit(cache=True)
def _smoothed_gradient(intensity, nx, ny, nz, sx, sy, sz, cx, cy, cz, offs, weights):
    gx = (
        _smoothed_value(intensity, nx, ny, nz, cx + 1.0, cy, cz, offs, weights)
        - _smoothed_value(intensity, nx, ny, nz, cx - 1.0, cy, cz, offs, weights)
    ) / (2.0 * sx)
    gy = (
        _smoothed_value(intensity, nx, ny, nz, cx, cy + 1.0, cz, offs, weights)
        - _smoothed_value(intensity, nx, ny, nz, cx, cy - 1.0, cz, offs, weights)
    ) / (2.0 * sy)
    gz = (
        _smoothed_value(intensity, nx, ny, nz, cx, cy, cz + 1.0, offs, weights)
        - _smoothed_value(intensity, nx, ny, nz, cx, cy, cz - 1.0, offs, weights)
    ) / (2.0 * sz)
    return gx, gy, gz


@njit(cache=True)
def _remove_ball(
    label, intensity, brick_counts, nx, ny, nz, bx, by, bz,
    sx, sy, sz, px, py, pz, radius, out_idx, out_int, out_lab,
):
    lo_i = max(0, _containing_index((px - radius) / sx))
    hi_i = min(nx - 1, _containing_index((px + radius) / sx) + 1)
    lo_j = max(0, _containing_index((py - radius) / sy))
    hi_j = min(ny - 1, _containing_index((py + radius) / sy) + 1)
    lo_k = max(0, _containing_index((pz - radius) / sz))
    hi_k = min(nz - 1, _containing_index((pz + radius) / sz) + 1)
    r2 = radius * radius
    m = 0
    for k in range(lo_k, hi_k + 1):
        dz = (k + 0.5) * sz - pz
        for j in range(lo_j, hi_j + 1):
            dy = (j + 0.5) * sy - py
            for i in range(lo_i, hi_i + 1):
                flat = i + nx * (j + ny * k)
                if label[flat] == 0:
                    continue
                dx = (i + 0.5) * sx - px
                if dx * dx + dy * dy + dz * dz <= r2:
                    out_idx[m, 0] = i
                    out_idx[m, 1] = j
                    out_idx[m, 2] = k
                    out_int[m] = intensity[flat]
                    out_lab[m] = label[flat]
                    label[flat] = 0
                    intensity[flat] = 0.0
                    brick_counts[(i // BRICK) + bx * ((j // BRICK) + by * (k // BRICK))] -= 1
                    m += 1
    return m


@njit(cache=True)
def _sphere_blocked(label, nx, ny, nz, sx, sy, sz, px, py, pz, radius):
    # True when a sphere at local point p overlaps any occupied voxel box
    lo_i = max(0, _containing_index((px - radius) / sx))
    hi_i = min(nx - 1, _containing_index((px + radius) / sx) + 1)
    lo_j = max(0, _containing_index((py - radius) / sy))
    hi_j = min(ny - 1, _containing_index((py + radius) / sy) + 1)
    lo_k = max(0, _containing_index((pz - radius) / sz))
    hi_k = min(nz - 1, _containing_index((pz + radius) / sz) + 1)
    r2 = radius * radius
    for k in range(lo_k, hi_k + 1):
        z0 = k * sz
        dz = max(z0 - pz, 0.0, pz - (z0 + sz))
        for j in range(lo_j, hi_j + 1):
            y0 = j * sy
            dy = max(y0 - py, 0.0, py - (y0 + sy))
            for i in range(lo_i, hi_i + 1):
                if label[i + nx * (j + ny * k)] == 0:
                    continue
                x0 = i * sx
                dx = max(x0 - px, 0.0, px - (x0 + sx))
                if dx * dx + dy * dy + dz * dz <= r2:
                    return True
    return False


class VoxelVolume:
    """Dense intensity + label grid with an affine voxel-to-world map.

    Single writer (the simulation loop applies edits), multiple readers;
    readers never observe a partially applied edit because edits complete
    before any render/stream step of the same tick begins.
    """

    def __init__(self, dims, spacing, origin_pose: Pose, intensity, label, label_table):
        self.nx, self.ny, self.nz = (int(d) for d in dims)
        if min(self.nx, self.ny, self.nz) < 1:
            raise VolumeError("dims components must be >= 1")
        self.spacing = tuple(float(s) for s in spacing)
        if min(self.spacing) <= 0:
            raise VolumeError("spacing components must be > 0")
        self.origin_pose = origin_pose
        self._origin_inverse = origin_pose.inverse()  # origin never moves
        n = self.nx * self.ny * self.nz
        self.intensity = np.ascontiguousarray(intensity, dtype=np.float32).reshape(n)
        self.label = np.ascontiguousarray(label, dtype=np.uint8).reshape(n)
        self.label_table: dict[int, LabelInfo] = dict(label_table)
        self.bx = (self.nx + BRICK - 1) // BRICK
        self.by = (self.ny + BRICK - 1) // BRICK
        self.bz = (self.nz + BRICK - 1) // BRICK
        self.brick_counts = self._build_brick_counts()

    # ------------------------------------------------------------------
    # construction helpers

    @staticmethod
    def from_labels(label3d: np.ndarray, spacing, origin_pose: Pose, label_table) -> "VoxelVolume":
        """label3d indexed [z, y, x]; intensity set to 1 where labeled."""
        lab = np.ascontiguousarray(label3d, dtype=np.uint8)
        nz, ny, nx = lab.shape
        intensity = (lab > 0).astype(np.float32)
        return VoxelVolume((nx, ny, nz), spacing, origin_pose, intensity, lab, label_table)

    def copy(self) -> "VoxelVolume":
        return VoxelVolume(
            (self.nx, self.ny, self.nz),
            self.spacing,
            self.origin_pose,
            self.intensity.copy(),
            self.label.copy(),
            self.label_table,
        )

    def _build_brick_counts(self) -> np.ndarray:
        occ = (self.label3d > 0)
        pz = self.bz * BRICK - self.nz
        py = self.by * BRICK - self.ny
        px = self.bx * BRICK - self.nx
        occ = np.pad(occ, ((0, pz), (0, py), (0, px)))
        counts = occ.reshape(self.bz, BRICK, self.by, BRICK, self.bx, BRICK).sum(axis=(1, 3, 5))
        return np.ascontiguousarray(counts, dtype=np.int64).reshape(-1)

    # ------------------------------------------------------------------
    # views and maps

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def intensity3d(self) -> np.ndarray:
        return self.intensity.reshape(self.nz, self.ny, self.nx)

    @property
    def label3d(self) -> np.ndarray:
        return self.label.reshape(self.nz, self.ny, self.nx)

    @property
    def occupied_count(self) -> int:
        return int(np.count_nonzero(self.label))

    def extent_local(self) -> tuple[float, float, float]:
        return (self.nx * self.spacing[0], self.ny * self.spacing[1], self.nz * self.spacing[2])

    def world_to_local(self, p) -> tuple[float, float, float]:
        return self._origin_inverse.apply(p)

    def local_to_world(self, p) -> tuple[float, float, float]:
        return self.origin_pose.apply(p)

    def voxel_center_world(self, i: int, j: int, k: int) -> tuple[float, float, float]:
        sx, sy, sz = self.spacing
        return self.local_to_world(((i + 0.5) * sx, (j + 0.5) * sy, (k + 0.5) * sz))

    def voxel_index(self, world_point) -> tuple[int, int, int] | None:
        lx, ly, lz = self.world_to_local(world_point)
        sx, sy, sz = self.spacing
        i = int(np.ceil(lx / sx)) - 1
        j = int(np.ceil(ly / sy)) - 1
        k = int(np.ceil(lz / sz)) - 1
        if 0 <= i < self.nx and 0 <= j < self.ny and 0 <= k < self.nz:
            return (i, j, k)
        return None

    # ------------------------------------------------------------------
    # queries

    def sample(self, world_point) -> SampleResult:
        idx = self.voxel_index(world_point)
        if idx is None:
            return SampleResult(False, 0)
        const_label = int(self.label[idx[0] + self.nx * (idx[1] + self.ny * idx[2])])
        return SampleResult(const_label != 0, const_label)

    def gradient_normal(self, world_point, fallback) -> tuple[float, float, float]:
        """Unit surface normal (into empty space) from the intensity gradient;
        `fallback` is returned (normalized) when the gradient degenerates."""
        lx, ly, lz = self.world_to_local(world_point)
        sx, sy, sz = self.spacing
        g = _smoothed_gradient(
            self.intensity, self.nx, self.ny, self.nz, sx, sy, sz,
            lx / sx - 0.5, ly / sy - 0.5, lz / sz - 0.5,
            _GRAD_OFFS, _GRAD_WEIGHTS,
        )
        norm = float(np.sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]))
        if norm < 1e-9:
            f = np.asarray(fallback, dtype=np.float64)
            fn = np.linalg.norm(f)
            if fn < 1e-12:
                return (0.0, 0.0, 1.0)
            f = f / fn
            return (float(f[0]), float(f[1]), float(f[2]))
        local = (-g[0] / norm, -g[1] / norm, -g[2] / norm)
        return self.origin_pose.rotate(local)

    def box_distance(self, world_point) -> float:
        """Distance from a point to the volume's bounding box (0 inside)."""
        lx, ly, lz = self.world_to_local(world_point)
        ex, ey, ez = self.extent_local()
        dx = max(0.0 - lx, 0.0, lx - ex)
        dy = max(0.0 - ly, 0.0, ly - ey)
        dz = max(0.0 - lz, 0.0, lz - ez)
        return float(np.sqrt(dx * dx + dy * dy + dz * dz))

    def sphere_blocked(self, world_center, radius: float) -> bool:
        lx, ly, lz = self.world_to_local(world_center)
        sx, sy, sz = self.spacing
        return bool(
            _sphere_blocked(
                self.label, self.nx, self.ny, self.nz, sx, sy, sz, lx, ly, lz, float(radius)
            )
        )

    # ------------------------------------------------------------------
    # edits

    def remove_colliding_voxels(self, tip_center_world, tip_radius: float, tick: int) -> VoxelEdit:
        """Zero intensity and label of every voxel whose center lies within
        tip_radius of the tip center; returns the edit record."""
        if tip_radius <= 0:
            raise VolumeError("tip_radius must be > 0")
        lx, ly, lz = self.world_to_local(tip_center_world)
        sx, sy, sz = self.spacing
        span_i = int(np.ceil(2 * tip_radius / sx)) + 3
        span_j = int(np.ceil(2 * tip_radius / sy)) + 3
        span_k = int(np.ceil(2 * tip_radius / sz)) + 3
        cap = span_i * span_j * span_k
        out_idx = np.empty((cap, 3), dtype=np.uint32)
        out_int = np.empty(cap, dtype=np.float32)
        out_lab = np.empty(cap, dtype=np.uint8)
        m = _remove_ball(
            self.label, self.intensity, self.brick_counts,
            self.nx, self.ny, self.nz, self.bx, self.by, self.bz,
            sx, sy, sz, lx, ly, lz, float(tip_radius), out_idx, out_int, out_lab,
        )
        return VoxelEdit(
            tick=tick,
            indices=out_idx[:m].copy(),
            prior_intensity=out_int[:m].copy(),
            prior_label=out_lab[:m].copy(),
        )

    def _flat(self, idx: np.ndarray) -> np.ndarray:
        return idx[:, 0].astype(np.int64) + self.nx * (
            idx[:, 1].astype(np.int64) + self.ny * idx[:, 2].astype(np.int64)
        )

    def _brick_of(self, idx: np.ndarray) -> np.ndarray:
        return (idx[:, 0] // BRICK).astype(np.int64) + self.bx * (
            (idx[:, 1] // BRICK).astype(np.int64) + self.by * (idx[:, 2] // BRICK).astype(np.int64)
        )

    def apply_edit(self, edit: VoxelEdit) -> None:
        """Re-apply a recorded removal (replay path)."""
        flat = self._flat(edit.indices)
        was = self.label[flat] != 0
        self.label[flat] = 0
        self.intensity[flat] = 0.0
        np.subtract.at(self.brick_counts, self._brick_of(edit.indices)[was], 1)

    def revert_edit(self, edit: VoxelEdit) -> None:
        """Restore the prior values recorded in an edit (undo path)."""
        flat = self._flat(edit.indices)
        was_empty = self.label[flat] == 0
        self.label[flat] = edit.prior_label
        self.intensity[flat] = edit.prior_intensity
        now = edit.prior_label != 0
        np.add.at(self.brick_counts, self._brick_of(edit.indices)[was_empty & now], 1)


def load_volume(source: VolumeSource, base_dir: str | Path = ".") -> VoxelVolume:
    """Build a VoxelVolume from a slice-image stack.

    Slice k fills the z = k plane; image row j maps to y = j, column i to
    x = i.  Every pixel color must be the background color or appear in the
    label map.
    """
    base = Path(base_dir)
    if source.count < 1:
        raise VolumeError("descriptor lists no slices")
    color_to_label: dict[int, int] = {}
    label_table: dict[int, LabelInfo] = {}
    bg = parse_color_hex(source.background)
    color_to_label[(bg[0] << 16) | (bg[1] << 8) | bg[2]] = 0
    for hexcolor, (label_id, name) in source.label_map.items():
        rgb = parse_color_hex(hexcolor)
        key = (rgb[0] << 16) | (rgb[1] << 8) | rgb[2]
        color_to_label[key] = int(label_id)
        label_table[int(label_id)] = LabelInfo(name, rgb)

    label3d = None
    for k in range(source.count):
        path = base / source.slice_path(k)
        if not path.exists():
            raise MissingSlice(k, str(path))
        img = np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)
        h, w = img.shape[:2]
        if label3d is None:
            label3d = np.zeros((source.count, h, w), dtype=np.uint8)
        elif (h, w) != label3d.shape[1:]:
            raise InconsistentSliceSize(
                f"slice {k} is {w}x{h}, expected {label3d.shape[2]}x{label3d.shape[1]}"
            )
        keys = (
            img[:, :, 0].astype(np.uint32) << 16
            | img[:, :, 1].astype(np.uint32) << 8
            | img[:, :, 2].astype(np.uint32)
        )
        uniq = np.unique(keys)
        lut = {}
        for key in uniq.tolist():
            if key not in color_to_label:
                j, i = np.argwhere(keys == key)[0]
                raise UnmappedColor(
                    ((key >> 16) & 0xFF, (key >> 8) & 0xFF, key & 0xFF), k, (int(i), int(j))
                )
            lut[key] = color_to_label[key]
        out = np.zeros((h, w), dtype=np.uint8)
        for key, lid in lut.items():
            if lid:
                out[keys == key] = lid
        label3d[k] = out

    return VoxelVolume.from_labels(label3d, source.spacing, source.origin, label_table)


def save_slices(label3d: np.ndarray, source: VolumeSource, base_dir: str | Path = ".") -> None:
    """Write a [z, y, x] label grid as the slice stack a descriptor names."""
    base = Path(base_dir)
    id_to_color = {0: parse_color_hex(source.background)}
    for hexcolor, (label_id, _name) in source.label_map.items():
        id_to_color[int(label_id)] = parse_color_hex(hexcolor)
    palette = np.zeros((256, 3), dtype=np.uint8)
    for lid, rgb in id_to_color.items():
        palette[lid] = rgb
    for k in range(label3d.shape[0]):
        rgb = palette[label3d[k]]
        path = base / source.slice_path(k)
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(rgb).save(path)
