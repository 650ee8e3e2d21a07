"""Software frame renderer: first-hit raycasting over the voxel volume plus
analytic sphere/capsule bodies, feeding four passes:

1-2. one traversal per pixel produces hit depth, label and normal; the
     color plane (Lambertian shading) and the packed nonlinear depth plane
     are derived from it,
3.   depth linearization (unpack -> inverse projection -> normalize),
4.   point-cloud assembly (rescale + color + label per valid pixel).

The color pass and the segmentation pass share the single traversal, so
their visibility solutions are identical by construction.

Traversal contract (the acceptance oracle mirrors it exactly):

- rays are marched in the volume's local metric frame with fixed step
  h = 0.5 * min(spacing), starting at t_lo = max(near/cos, box_enter)
  and ending at t_hi = min(far/cos, box_exit, nearest body hit)
- a sample at ray parameter t resolves to a voxel through voxel-unit ray
  coefficients: u_axis = o_axis*(1/s_axis) + t * (d_axis*(1/s_axis)),
  voxel = ceil(u) - 1 per axis (shared faces belong to the lower voxel)
- samples inside a brick (8^3 voxels) with zero occupancy skip to the
  brick exit plus 1e-4*h and clear the previous-sample bracket
- on the first occupied sample: if a previous free sample exists, one
  bisection halves the bracket and the hit is the midpoint of the
  surviving half-bracket (error <= h/4); the label comes from the
  occupied end of that half-bracket; with no previous sample the hit is
  the sample itself
- the reported depth is the hit's distance along the camera view axis
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from .camera import (
    CameraModel,
    StereoRig,
    pack_depth,
    pixel_ray_dirs,
    rescale_points,
    unpack_depth,
    unproject_fragment,
)
from .volume import BRICK, VoxelVolume

AMBIENT = 0.35


class MissingStyle(Exception):
    def __init__(self, obj_name: str):
        self.object_name = obj_name
        super().__init__(f"visible object {obj_name!r} has no render style with a label color")


@dataclass
class BodyPrim:
    """Analytic renderable/collidable primitive (sphere when a == b)."""

    a: tuple[float, float, float]
    b: tuple[float, float, float]
    radius: float
    label: int
    color: tuple[int, int, int]


@dataclass
class RenderScene:
    """Immutable-per-frame snapshot of everything a camera can see."""

    volume: VoxelVolume | None
    prims: list[BodyPrim]
    background: tuple[int, int, int] = (20, 20, 24)
    light_dir: tuple[float, float, float] | None = None  # None = headlight
    label_colors: np.ndarray | None = None  # (256, 3) uint8

    def __post_init__(self):
        if self.label_colors is None:
            lut = np.zeros((256, 3), dtype=np.uint8)
            if self.volume is not None:
                for lid, info in self.volume.label_table.items():
                    lut[lid] = info.color
            for p in self.prims:
                lut[p.label] = p.color
            self.label_colors = lut


@dataclass
class FrameBuffers:
    color: np.ndarray  # (H, W, 3) uint8
    packed_depth: np.ndarray  # (H, W, 4) uint8; (255,255,255,255) where invalid
    seg: np.ndarray  # (H, W) uint8 label ids
    valid: np.ndarray  # (H, W) bool


@dataclass
class PointCloud:
    xyz: np.ndarray  # (M, 3) float32 camera-space meters (+z = depth)
    rgb: np.ndarray  # (M, 3) uint8
    label: np.ndarray  # (M,) uint8
    pixel: np.ndarray  # (M, 2) uint32 (column, row)

    @property
    def count(self) -> int:
        return int(self.xyz.shape[0])


# ---------------------------------------------------------------------------
# traversal kernel


@njit(cache=True, parallel=True)
def _march_kernel(
    label, intensity, brick_counts,
    nx, ny, nz, bx, by, bz, sx, sy, sz,
    ox, oy, oz, dirs, t_lo_in, t_hi_in,
    step, out_t, out_label, out_normal,
):
    ex = nx * sx
    ey = ny * sy
    ez = nz * sz
    eps = 1e-4 * step
    n_rays = dirs.shape[0]
    for r in prange(n_rays):
        dx = dirs[r, 0]
        dy = dirs[r, 1]
        dz = dirs[r, 2]
        t_lo = t_lo_in[r]
        t_hi = t_hi_in[r]
        out_t[r] = -1.0
        out_label[r] = 0

        # slab clip against the volume box [0, extent] in local coordinates
        enter = t_lo
        leave = t_hi
        ok = True
        for axis in range(3):
            if axis == 0:
                o_a, d_a, e_a = ox, dx, ex
            elif axis == 1:
                o_a, d_a, e_a = oy, dy, ey
            else:
                o_a, d_a, e_a = oz, dz, ez
            if abs(d_a) < 1e-300:
                if o_a < 0.0 or o_a > e_a:
                    ok = False
                    break
            else:
                inv = 1.0 / d_a
                ta = (0.0 - o_a) * inv
                tb = (e_a - o_a) * inv
                if ta > tb:
                    ta, tb = tb, ta
                if ta > enter:
                    enter = ta
                if tb < leave:
                    leave = tb
        if not ok or enter > leave:
            continue

        # voxel-unit ray coefficients: no per-sample divisions
        uox = ox * (1.0 / sx)
        uoy = oy * (1.0 / sy)
        uoz = oz * (1.0 / sz)
        udx = dx * (1.0 / sx)
        udy = dy * (1.0 / sy)
        udz = dz * (1.0 / sz)

        t = enter
        prev = -1.0  # < 0 means "no previous free sample"
        hit_t = -1.0
        hit_label = 0
        while t <= leave:
            i = int(np.ceil(uox + t * udx)) - 1
            j = int(np.ceil(uoy + t * udy)) - 1
            k = int(np.ceil(uoz + t * udz)) - 1
            if i < 0 or i >= nx or j < 0 or j >= ny or k < 0 or k >= nz:
                prev = t
                t += step
                continue
            bi = i // BRICK
            bj = j // BRICK
            bk = k // BRICK
            if brick_counts[bi + bx * (bj + by * bk)] == 0:
                # skip the empty brick: exit t over the three slab planes
                t_exit = leave + 1.0
                if abs(dx) >= 1e-300:
                    bound = (bi + 1) * BRICK * sx if dx > 0 else bi * BRICK * sx
                    ta = (bound - ox) / dx
                    if ta < t_exit:
                        t_exit = ta
                if abs(dy) >= 1e-300:
                    bound = (bj + 1) * BRICK * sy if dy > 0 else bj * BRICK * sy
                    ta = (bound - oy) / dy
                    if ta < t_exit:
                        t_exit = ta
                if abs(dz) >= 1e-300:
                    bound = (bk + 1) * BRICK * sz if dz > 0 else bk * BRICK * sz
                    ta = (bound - oz) / dz
                    if ta < t_exit:
                        t_exit = ta
                if t_exit < t:
                    t_exit = t
                t = t_exit + eps
                prev = -1.0
                continue
            lab = label[i + nx * (j + ny * k)]
            if lab != 0:
                if prev < 0.0:
                    hit_t = t
                    hit_label = lab
                else:
                    m = 0.5 * (prev + t)
                    mi = int(np.ceil(uox + m * udx)) - 1
                    mj = int(np.ceil(uoy + m * udy)) - 1
                    mk = int(np.ceil(uoz + m * udz)) - 1
                    mlab = 0
                    if 0 <= mi < nx and 0 <= mj < ny and 0 <= mk < nz:
                        mlab = label[mi + nx * (mj + ny * mk)]
                    if mlab != 0:
                        hit_t = 0.5 * (prev + m)
                        hit_label = mlab
                    else:
                        hit_t = 0.5 * (m + t)
                        hit_label = lab
                break
            prev = t
            t += step
        if hit_t < 0.0:
            continue
        out_t[r] = hit_t
        out_label[r] = hit_label
        # cheap shading normal: +-1 voxel central difference of trilinear
        # intensity at the hit point (visual only; fallback faces the viewer)
        hx = ox + hit_t * dx
        hy = oy + hit_t * dy
        hz = oz + hit_t * dz
        cx = hx / sx - 0.5
        cy = hy / sy - 0.5
        cz = hz / sz - 0.5
        gx = (_tri(intensity, nx, ny, nz, cx + 1.0, cy, cz)
              - _tri(intensity, nx, ny, nz, cx - 1.0, cy, cz)) / (2.0 * sx)
        gy = (_tri(intensity, nx, ny, nz, cx, cy + 1.0, cz)
              - _tri(intensity, nx, ny, nz, cx, cy - 1.0, cz)) / (2.0 * sy)
        gz = (_tri(intensity, nx, ny, nz, cx, cy, cz + 1.0)
              - _tri(intensity, nx, ny, nz, cx, cy, cz - 1.0)) / (2.0 * sz)
        norm = math.sqrt(gx * gx + gy * gy + gz * gz)
        if norm < 1e-9:
            out_normal[r, 0] = -dx
            out_normal[r, 1] = -dy
            out_normal[r, 2] = -dz
        else:
            out_normal[r, 0] = -gx / norm
            out_normal[r, 1] = -gy / norm
            out_normal[r, 2] = -gz / norm


@njit(cache=True)
def _tri(intensity, nx, ny, nz, cx, cy, cz):
    ix = int(np.floor(cx))
    iy = int(np.floor(cy))
    iz = int(np.floor(cz))
    fx = cx - ix
    fy = cy - iy
    fz = cz - iz
    acc = 0.0
    for dz_ in range(2):
        kz = iz + dz_
        if kz < 0 or kz >= nz:
            continue
        wz = fz if dz_ == 1 else 1.0 - fz
        for dy_ in range(2):
            ky = iy + dy_
            if ky < 0 or ky >= ny:
                continue
            wy = fy if dy_ == 1 else 1.0 - fy
            for dx_ in range(2):
                kx = ix + dx_
                if kx < 0 or kx >= nx:
                    continue
                wx = fx if dx_ == 1 else 1.0 - fx
                acc += wz * wy * wx * intensity[kx + nx * (ky + ny * kz)]
    return acc


# ---------------------------------------------------------------------------
# analytic body primitives (vectorized over rays)


def _ray_sphere(origin, dirs, center, radius):
    oc = origin - center
    b = dirs @ oc
    c = float(oc @ oc) - radius * radius
    disc = b * b - c
    t = np.full(dirs.shape[0], np.inf)
    hit = disc >= 0.0
    root = np.sqrt(np.maximum(disc, 0.0))
    t_near = -b - root
    t_far = -b + root
    cand = np.where(t_near > 0.0, t_near, np.where(t_far > 0.0, t_far, np.inf))
    t[hit] = cand[hit]
    return t


def _ray_capsule(origin, dirs, pa, pb, radius):
    ba = pb - pa
    length = float(np.linalg.norm(ba))
    if length < 1e-12:
        return _ray_sphere(origin, dirs, pa, radius)
    u = ba / length
    m = origin - pa
    md = m - (m @ u) * u
    dd = dirs - (dirs @ u)[:, None] * u
    a = np.einsum("ij,ij->i", dd, dd)
    b = dd @ md
    c = float(md @ md) - radius * radius
    t = np.full(dirs.shape[0], np.inf)
    nz = a > 1e-18
    disc = b * b - a * c
    okq = nz & (disc >= 0.0)
    root = np.sqrt(np.maximum(disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_cyl = (-b - root) / a
    s = (m @ u) + t_cyl * (dirs @ u)
    cyl_ok = okq & (t_cyl > 0.0) & (s >= 0.0) & (s <= length)
    t[cyl_ok] = t_cyl[cyl_ok]
    for cap in (pa, pb):
        t_cap = _ray_sphere(origin, dirs, cap, radius)
        t = np.minimum(t, t_cap)
    return t


def _body_hits(origin, dirs, prims):
    """Nearest body hit per ray: (t, label, normal)."""
    n = dirs.shape[0]
    best_t = np.full(n, np.inf)
    best_label = np.zeros(n, dtype=np.uint8)
    best_normal = np.zeros((n, 3), dtype=np.float64)
    for prim in prims:
        pa = np.asarray(prim.a, dtype=np.float64)
        pb = np.asarray(prim.b, dtype=np.float64)
        if np.allclose(pa, pb):
            t = _ray_sphere(origin, dirs, pa, prim.radius)
        else:
            t = _ray_capsule(origin, dirs, pa, pb, prim.radius)
        closer = t < best_t
        if not np.any(closer):
            continue
        p = origin[None, :] + t[closer, None] * dirs[closer]
        ba = pb - pa
        denom = float(ba @ ba)
        if denom < 1e-18:
            axis_pt = np.broadcast_to(pa, p.shape)
        else:
            s = np.clip((p - pa) @ ba / denom, 0.0, 1.0)
            axis_pt = pa[None, :] + s[:, None] * ba[None, :]
        nrm = p - axis_pt
        nn = np.linalg.norm(nrm, axis=1, keepdims=True)
        nrm = np.where(nn > 1e-12, nrm / nn, np.array([[0.0, 0.0, 1.0]]))
        best_t[closer] = t[closer]
        best_label[closer] = prim.label
        best_normal[closer] = nrm
    return best_t, best_label, best_normal


# ---------------------------------------------------------------------------
# passes


def camera_rays(cam: CameraModel):
    """(dirs_world (N,3), cos view-angle (N,)) for every pixel, row-major."""
    d_cam = pixel_ray_dirs(cam.frustum).reshape(-1, 3)
    r = cam.pose.rotation_matrix()
    dirs = d_cam @ r.T
    cosang = -d_cam[:, 2]
    return np.ascontiguousarray(dirs), cosang


def traversal_inputs(rscene: RenderScene, cam: CameraModel) -> dict:
    """Shared per-frame ray setup: world rays, per-ray t range, nearest body
    hits, and the volume-local ray bundle.  render_view consumes this and so
    does the single-ray acceptance oracle, so both traverse identical rays."""
    fr = cam.frustum
    dirs_world, cosang = camera_rays(cam)
    origin_world = np.array(cam.pose.position)
    t_lo = fr.near / cosang
    t_hi = fr.far / cosang
    body_t, body_label, body_normal = _body_hits(origin_world, dirs_world, rscene.prims)
    body_t = np.where((body_t >= t_lo) & (body_t <= t_hi), body_t, np.inf)
    out = {
        "dirs_world": dirs_world,
        "cosang": cosang,
        "origin_world": origin_world,
        "t_lo": t_lo,
        "t_hi": t_hi,
        "body_t": body_t,
        "body_label": body_label,
        "body_normal": body_normal,
        "o_local": None,
        "dirs_local": None,
        "stop": np.minimum(t_hi, body_t),
        "step": 0.0,
    }
    vol = rscene.volume
    if vol is not None:
        inv = vol.origin_pose.inverse()
        r_inv = inv.rotation_matrix()
        out["o_local"] = np.array(inv.apply(tuple(origin_world)))
        out["dirs_local"] = np.ascontiguousarray(dirs_world @ r_inv.T)
        out["step"] = 0.5 * min(vol.spacing)
    return out


def render_view(rscene: RenderScene, cam: CameraModel, threads: int | None = None) -> FrameBuffers:
    """Single traversal -> all planes of one camera."""
    fr = cam.frustum
    w, h = fr.width, fr.height
    n_rays = w * h
    rays = traversal_inputs(rscene, cam)
    dirs_world, cosang = rays["dirs_world"], rays["cosang"]
    t_lo, t_hi = rays["t_lo"], rays["t_hi"]
    body_t, body_label, body_normal = rays["body_t"], rays["body_label"], rays["body_normal"]

    vol_t = np.full(n_rays, -1.0)
    vol_label = np.zeros(n_rays, dtype=np.uint8)
    vol_normal_local = np.zeros((n_rays, 3), dtype=np.float32)
    vol = rscene.volume
    if vol is not None and vol.occupied_count > 0:
        if threads is not None:
            numba.set_num_threads(threads)
        o_local = rays["o_local"]
        _march_kernel(
            vol.label, vol.intensity, vol.brick_counts,
            vol.nx, vol.ny, vol.nz, vol.bx, vol.by, vol.bz,
            vol.spacing[0], vol.spacing[1], vol.spacing[2],
            o_local[0], o_local[1], o_local[2],
            rays["dirs_local"], t_lo, rays["stop"], rays["step"],
            vol_t, vol_label, vol_normal_local,
        )

    vol_hit = vol_t >= 0.0
    body_hit = np.isfinite(body_t)
    use_vol = vol_hit  # kernel never marches past the nearest body hit
    use_body = body_hit & ~vol_hit
    valid = use_vol | use_body

    t_all = np.where(use_vol, vol_t, np.where(use_body, body_t, np.inf))
    seg = np.where(use_vol, vol_label, np.where(use_body, body_label, 0)).astype(np.uint8)

    normals = np.zeros((n_rays, 3))
    if vol is not None and np.any(use_vol):
        r_vol = vol.origin_pose.rotation_matrix()
        normals[use_vol] = vol_normal_local[use_vol].astype(np.float64) @ r_vol.T
    normals[use_body] = body_normal[use_body]

    if rscene.light_dir is None:
        light = dirs_world
    else:
        ld = np.asarray(rscene.light_dir, dtype=np.float64)
        light = np.broadcast_to(ld / np.linalg.norm(ld), dirs_world.shape)
    lambert = np.clip(-np.einsum("ij,ij->i", normals, light), 0.0, 1.0)
    shade = AMBIENT + (1.0 - AMBIENT) * lambert
    base = rscene.label_colors[seg].astype(np.float64)
    color = (base * shade[:, None]).round().astype(np.uint8)
    color[~valid] = rscene.background

    depth = t_all * cosang
    a = (fr.far + fr.near) / (fr.far - fr.near)
    b = 2.0 * fr.far * fr.near / (fr.far - fr.near)
    with np.errstate(invalid="ignore", divide="ignore"):
        z_ndc = a - b / depth
    zbuf = np.clip((z_ndc + 1.0) / 2.0, 0.0, 1.0 - 2.0 ** -24)
    zbuf[~valid] = 0.0
    packed = pack_depth(zbuf)
    packed[~valid] = 255

    return FrameBuffers(
        color=color.reshape(h, w, 3),
        packed_depth=packed.reshape(h, w, 4),
        seg=seg.reshape(h, w),
        valid=valid.reshape(h, w),
    )


def render_color(rscene: RenderScene, cam: CameraModel, threads=None):
    """Passes 1-2: color plane + packed depth (+ validity)."""
    fb = render_view(rscene, cam, threads)
    return fb.color, fb.packed_depth, fb.valid


def render_segmentation(rscene: RenderScene, cam: CameraModel, threads=None):
    """Label plane with the identical visibility solution and no shading."""
    for prim in rscene.prims:
        if prim.label == 0:
            raise MissingStyle(f"primitive@{prim.a}")
    fb = render_view(rscene, cam, threads)
    return fb.seg


def depth_linearize_pass(fb: FrameBuffers, cam: CameraModel) -> np.ndarray:
    """Pass 3: packed plane -> normalized N image, +inf at invalid pixels."""
    fr = cam.frustum
    h, w = fb.seg.shape
    z01 = unpack_depth(fb.packed_depth)
    cols, rows = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    usable = fb.valid & (z01 < 1.0)
    n_plane = np.full((h, w, 3), np.inf, dtype=np.float64)
    if np.any(usable):
        n_plane[usable] = unproject_fragment(cols[usable], rows[usable], z01[usable], fr)
    return n_plane.astype(np.float32)


def depth_meters(n_plane: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Metric depth plane (float32 meters, +inf where no hit)."""
    fr = cam.frustum
    nz = n_plane[..., 2].astype(np.float64)
    out = np.where(np.isfinite(nz), fr.near + nz * (fr.far - fr.near), np.inf)
    return out.astype(np.float32)


def assemble_point_cloud(fb: FrameBuffers, cam: CameraModel,
                         n_plane: np.ndarray | None = None) -> PointCloud:
    """Pass 4: camera-space labeled, colored points, one per valid pixel."""
    if n_plane is None:
        n_plane = depth_linearize_pass(fb, cam)
    mask = fb.valid & np.isfinite(n_plane[..., 2])
    rows, cols = np.nonzero(mask)
    xyz = rescale_points(n_plane[mask].astype(np.float64), cam.frustum).astype(np.float32)
    return PointCloud(
        xyz=xyz,
        rgb=fb.color[mask],
        label=fb.seg[mask],
        pixel=np.stack([cols, rows], axis=1).astype(np.uint32),
    )


def render_stereo(rscene: RenderScene, rig: StereoRig, threads=None) -> dict[str, FrameBuffers]:
    """Full pipeline for both rig cameras."""
    return {
        "left": render_view(rscene, rig.left, threads),
        "right": render_view(rscene, rig.right, threads),
    }
