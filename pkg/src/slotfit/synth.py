"""Synthetic scene generator: the analytic ground-truth oracle.

The world is a tabletop (z = 0) carrying a slab whose top face holds
n_slots cylindrical cavities along the x axis, plus a spherical pick
object resting south of the slab. The demonstrated motion translates the
object into cavity 0 (with an optional yaw), so the exact slot is always
index 0. Three pinhole views are rendered by exact ray intersection
against the table plane, slab top, cavity floors and walls, and the
sphere; no graphics dependency is involved. The human camera is shared by
the start and end frames (a static demonstration video); the robot camera
is the human camera perturbed by the configured offset.

Ground truth is analytic: the three stage transforms come from the camera
poses and the world motion, and each per-slot placement transform is
their chain. Correspondences are exact images of shared surface sample
points, optionally perturbed with Gaussian noise and partially replaced
by uniform outliers (flagged in the ground-truth sidecar). Output is
bit-identical for identical parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .fixtures import (
    GroundTruth,
    SceneCorrespondences,
    ScenePair,
    SceneView,
    VIEW_HUMAN_END,
    VIEW_HUMAN_START,
    VIEW_ROBOT,
)
from .geometry import CameraIntrinsics, DepthImage, PointCloud, RigidTransform, lift_depth, project_points
from .masks import BinaryMask, GrayImage, rasterize_projection, round_half_away
from .registration import CorrespondenceSet

# World geometry (meters).
SLAB_TOP_Z = 0.04
CAVITY_FLOOR_Z = 0.015
SLOT_RADIUS = 0.03
OBJECT_RADIUS = 0.025
SLAB_MARGIN = 0.03

# Flat shading per surface.
GRAY_TABLE = 70
GRAY_SLAB = 135
GRAY_FLOOR = 100
GRAY_WALL = 90
GRAY_OBJECT = 210

# GT post-placement mask is the projected post cloud grown by this radius,
# absorbing single-pixel rounding flips at the silhouette boundary.
POST_MASK_DILATION = 1

_LABEL_NONE = -1
_LABEL_TABLE = 0
_LABEL_SLAB = 1
_LABEL_OBJECT = 2
_LABEL_FLOOR_BASE = 10
_LABEL_WALL_BASE = 1000


@dataclass(frozen=True)
class SynthParams:
    """Generator knobs; every field participates in the deterministic seed."""

    seed: int = 0
    n_slots: int = 3
    slot_spacing: float = 0.08
    object_points: int = 120
    view_offset: tuple = (0.06, 0.04, -0.05, 12.0)  # dx, dy, dz (m), yaw (deg)
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    image_size: tuple = (320, 240)
    correspondence_form: str = "point"
    demo_yaw_deg: float = 20.0

    def __post_init__(self):
        if self.n_slots < 1:
            raise InputError(f"n_slots must be >= 1, got {self.n_slots}")
        if not (0.0 <= self.outlier_fraction < 1.0):
            raise InputError(
                f"outlier_fraction must lie in [0, 1), got {self.outlier_fraction}"
            )
        if self.noise_sigma < 0:
            raise InputError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.slot_spacing <= 2 * SLOT_RADIUS:
            raise InputError(
                f"slot_spacing must exceed the cavity diameter {2 * SLOT_RADIUS}"
            )
        if self.object_points < 8:
            raise InputError(f"object_points must be >= 8, got {self.object_points}")
        if self.correspondence_form not in ("point", "pixel"):
            raise InputError(
                f"correspondence_form must be 'point' or 'pixel', got {self.correspondence_form!r}"
            )
        w, h = self.image_size
        if w < 64 or h < 64:
            raise InputError(f"image_size must be at least 64x64, got {w}x{h}")
        if len(self.view_offset) != 4:
            raise InputError("view_offset must be (dx, dy, dz, yaw_deg)")


def _rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


@dataclass(frozen=True)
class _Camera:
    r_cw: np.ndarray  # camera-to-world rotation
    position: np.ndarray

    def world_to_cam(self) -> RigidTransform:
        return RigidTransform(self.r_cw.T, -self.r_cw.T @ self.position)


def _camera(position, yaw: float, pitch: float) -> _Camera:
    # Start looking straight down (+z_cam -> -z_world), then pitch about
    # world x and yaw about world z.
    r_cw = _rot_z(yaw) @ _rot_x(math.pi + pitch)
    return _Camera(r_cw=r_cw, position=np.asarray(position, dtype=np.float64))


@dataclass(frozen=True)
class _World:
    slot_centers: np.ndarray  # (k, 2) cavity centers in the z=0 plane
    slab_half: tuple
    object_start: np.ndarray
    object_end: np.ndarray
    demo_yaw: float

    @property
    def motion(self) -> RigidTransform:
        rot = _rot_z(self.demo_yaw)
        return RigidTransform(rot, self.object_end - rot @ self.object_start)

    def lattice_offset(self, slot_index: int) -> np.ndarray:
        d = self.slot_centers[slot_index] - self.slot_centers[0]
        return np.array([d[0], d[1], 0.0])


def _build_world(params: SynthParams) -> _World:
    k = params.n_slots
    xs = (np.arange(k) - (k - 1) / 2.0) * params.slot_spacing
    centers = np.stack([xs, np.zeros(k)], axis=1)
    half_x = (k - 1) / 2.0 * params.slot_spacing + SLOT_RADIUS + SLAB_MARGIN
    half_y = SLOT_RADIUS + SLAB_MARGIN
    start = np.array([0.02, -(half_y + 0.06 + OBJECT_RADIUS), OBJECT_RADIUS])
    end = np.array([centers[0, 0], centers[0, 1], CAVITY_FLOOR_Z + OBJECT_RADIUS])
    return _World(
        slot_centers=centers,
        slab_half=(half_x, half_y),
        object_start=start,
        object_end=end,
        demo_yaw=math.radians(params.demo_yaw_deg),
    )


def _intrinsics(params: SynthParams) -> CameraIntrinsics:
    w, h = params.image_size
    f = 0.95 * w
    return CameraIntrinsics(fx=f, fy=f, cx=(w - 1) / 2.0, cy=(h - 1) / 2.0, width=w, height=h)


def _render(cam: _Camera, intr: CameraIntrinsics, world: _World, sphere_center):
    """Exact closest-hit render; returns (depth meters, gray, labels)."""
    w, h = intr.width, intr.height
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    d_cam = np.stack(
        [(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy, np.ones_like(uu)], axis=-1
    )
    d_w = d_cam @ cam.r_cw.T
    origin = cam.position

    best_t = np.full((h, w), np.inf)
    labels = np.full((h, w), _LABEL_NONE, dtype=np.int64)

    def consider(t, valid, label):
        better = valid & (t < best_t)
        best_t[better] = t[better]
        labels[better] = label

    def plane_hit(z0):
        dz = d_w[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (z0 - origin[2]) / dz
        valid = np.isfinite(t) & (t > 0)
        x = origin[0] + t * d_w[..., 0]
        y = origin[1] + t * d_w[..., 1]
        return t, valid, x, y

    # Table plane.
    t, valid, _, _ = plane_hit(0.0)
    consider(t, valid, _LABEL_TABLE)

    # Slab top, minus the cavity openings.
    t, valid, x, y = plane_hit(SLAB_TOP_Z)
    half_x, half_y = world.slab_half
    on_slab = valid & (np.abs(x) <= half_x) & (np.abs(y) <= half_y)
    in_any_cavity = np.zeros_like(on_slab)
    for cx, cy in world.slot_centers:
        in_any_cavity |= (x - cx) ** 2 + (y - cy) ** 2 <= SLOT_RADIUS**2
    consider(t, on_slab & ~in_any_cavity, _LABEL_SLAB)

    # Cavity floors and walls.
    t_floor, valid_floor, xf, yf = plane_hit(CAVITY_FLOOR_Z)
    dx, dy = d_w[..., 0], d_w[..., 1]
    a_cyl = dx**2 + dy**2
    for i, (cx, cy) in enumerate(world.slot_centers):
        inside = (xf - cx) ** 2 + (yf - cy) ** 2 <= SLOT_RADIUS**2
        consider(t_floor, valid_floor & inside, _LABEL_FLOOR_BASE + i)

        ox, oy = origin[0] - cx, origin[1] - cy
        b_cyl = 2.0 * (ox * dx + oy * dy)
        c_cyl = ox**2 + oy**2 - SLOT_RADIUS**2
        disc = b_cyl**2 - 4.0 * a_cyl * c_cyl
        ok = (disc >= 0) & (a_cyl > 0)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        for sign in (-1.0, 1.0):
            with np.errstate(divide="ignore", invalid="ignore"):
                t_cyl = (-b_cyl + sign * sq) / (2.0 * a_cyl)
            z = origin[2] + t_cyl * d_w[..., 2]
            valid_wall = ok & (t_cyl > 0) & (z >= CAVITY_FLOOR_Z) & (z <= SLAB_TOP_Z)
            consider(t_cyl, valid_wall, _LABEL_WALL_BASE + i)

    # Sphere.
    if sphere_center is not None:
        oc = origin - np.asarray(sphere_center)
        a_s = np.sum(d_w**2, axis=-1)
        b_s = 2.0 * (d_w @ oc)
        c_s = oc @ oc - OBJECT_RADIUS**2
        disc = b_s**2 - 4.0 * a_s * c_s
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        for sign in (-1.0, 1.0):
            t_s = (-b_s + sign * sq) / (2.0 * a_s)
            consider(t_s, ok & (t_s > 0), _LABEL_OBJECT)

    depth = np.where(np.isfinite(best_t), best_t, 0.0)
    gray = np.zeros((h, w), dtype=np.uint8)
    gray[labels == _LABEL_TABLE] = GRAY_TABLE
    gray[labels == _LABEL_SLAB] = GRAY_SLAB
    gray[(labels >= _LABEL_FLOOR_BASE) & (labels < _LABEL_WALL_BASE)] = GRAY_FLOOR
    gray[labels >= _LABEL_WALL_BASE] = GRAY_WALL
    gray[labels == _LABEL_OBJECT] = GRAY_OBJECT
    return depth, gray, labels


def _quantize_depth(depth: np.ndarray) -> DepthImage:
    # Millimeter quantization up front, so writing and reloading the
    # fixture reproduces the in-memory values exactly.
    return DepthImage(round_half_away(depth * 1000.0) / 1000.0)


def _cap_directions(count: int, min_z: float) -> np.ndarray:
    """Evenly spread unit directions on the spherical cap z >= min_z."""
    j = np.arange(count, dtype=np.float64)
    z = min_z + (1.0 - min_z) * (j + 0.5) / count
    phi = j * math.pi * (3.0 - math.sqrt(5.0))
    r = np.sqrt(np.clip(1.0 - z**2, 0.0, None))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _slot_sample_points(count: int, center_xy: np.ndarray) -> np.ndarray:
    """Two labeled rings: cavity floor circle and the rim circle."""
    n_floor = count // 2
    n_rim = count - n_floor
    pts = []
    for n, radius, z, phase in (
        (n_floor, 0.75 * SLOT_RADIUS, CAVITY_FLOOR_Z, 0.35),
        (n_rim, SLOT_RADIUS, SLAB_TOP_Z, 1.10),
    ):
        ang = 2.0 * math.pi * np.arange(n) / n + phase
        pts.append(
            np.stack(
                [center_xy[0] + radius * np.cos(ang), center_xy[1] + radius * np.sin(ang),
                 np.full(n, z)],
                axis=1,
            )
        )
    return np.concatenate(pts, axis=0)


def _project_pixels(points_cam: np.ndarray, intr: CameraIntrinsics) -> np.ndarray:
    cloud = PointCloud(points_cam)
    pixels, dropped = project_points(cloud, intr)
    if dropped:
        raise InputError("sample point behind the camera; scene geometry is off")
    return pixels


def _make_correspondences(
    src_cam: np.ndarray,
    dst_cam: np.ndarray,
    src_view: str,
    dst_view: str,
    params: SynthParams,
    intr: CameraIntrinsics,
    rng: np.random.Generator,
) -> tuple[CorrespondenceSet, list[int]]:
    n = src_cam.shape[0]
    n_outliers = int(round(params.outlier_fraction * n))
    if params.correspondence_form == "point":
        src = src_cam.copy()
        dst = dst_cam.copy()
        if params.noise_sigma > 0:
            src += rng.normal(0.0, params.noise_sigma, src.shape)
            dst += rng.normal(0.0, params.noise_sigma, dst.shape)
        outliers = []
        if n_outliers:
            idx = rng.choice(n, size=n_outliers, replace=False)
            dst[idx] = rng.uniform([-0.3, -0.3, 0.35], [0.3, 0.3, 0.9], (n_outliers, 3))
            outliers = sorted(int(i) for i in idx)
        corr = CorrespondenceSet(src, dst, src_view, dst_view, form="point")
        return corr, outliers

    src_px = _project_pixels(src_cam, intr)
    dst_px = _project_pixels(dst_cam, intr)
    if params.noise_sigma > 0:
        for px, cam in ((src_px, src_cam), (dst_px, dst_cam)):
            sigma_px = params.noise_sigma * intr.fx / cam[:, 2]
            px += rng.normal(0.0, 1.0, px.shape) * sigma_px[:, None]
    outliers = []
    if n_outliers:
        idx = rng.choice(n, size=n_outliers, replace=False)
        dst_px[idx] = rng.uniform([0.0, 0.0], [intr.width - 1.0, intr.height - 1.0],
                                  (n_outliers, 2))
        outliers = sorted(int(i) for i in idx)
    src_px[:, 0] = np.clip(src_px[:, 0], 0.0, intr.width - 1.0)
    src_px[:, 1] = np.clip(src_px[:, 1], 0.0, intr.height - 1.0)
    dst_px[:, 0] = np.clip(dst_px[:, 0], 0.0, intr.width - 1.0)
    dst_px[:, 1] = np.clip(dst_px[:, 1], 0.0, intr.height - 1.0)
    corr = CorrespondenceSet(src_px, dst_px, src_view, dst_view, form="pixel")
    return corr, outliers


def _slot_mask(labels: np.ndarray, i: int) -> BinaryMask:
    return BinaryMask((labels == _LABEL_FLOOR_BASE + i) | (labels == _LABEL_WALL_BASE + i))


def generate_scene(params: SynthParams) -> ScenePair:
    """Build a fully annotated synthetic scene pair."""
    world = _build_world(params)
    intr = _intrinsics(params)

    human_cam = _camera((0.0, -0.06, 0.75), yaw=0.0, pitch=math.radians(-6.0))
    dx, dy, dz, yaw_deg = params.view_offset
    robot_cam = _camera(
        human_cam.position + np.array([dx, dy, dz]),
        yaw=math.radians(yaw_deg),
        pitch=math.radians(-6.0),
    )

    depth_h1, gray_h1, labels_h1 = _render(human_cam, intr, world, world.object_start)
    depth_hn, gray_hn, labels_hn = _render(human_cam, intr, world, world.object_end)
    depth_r, gray_r, labels_r = _render(robot_cam, intr, world, world.object_start)

    object_mask_h1 = BinaryMask(labels_h1 == _LABEL_OBJECT)
    object_mask_hn = BinaryMask(labels_hn == _LABEL_OBJECT)
    object_mask_r = BinaryMask(labels_r == _LABEL_OBJECT)
    slot_mask_h1 = _slot_mask(labels_h1, 0)
    slot_masks_r = tuple(_slot_mask(labels_r, i) for i in range(params.n_slots))

    for mask, label in (
        (object_mask_h1, "object mask (human start)"),
        (object_mask_hn, "object mask (human end)"),
        (object_mask_r, "object mask (robot)"),
        (slot_mask_h1, "slot mask (human start)"),
        *((m, f"slot mask {i} (robot)") for i, m in enumerate(slot_masks_r)),
    ):
        if mask.area() == 0:
            raise InputError(f"{label} rendered empty; geometry does not fit the view")

    t_hw = human_cam.world_to_cam()
    t_rw = robot_cam.world_to_cam()
    motion = world.motion
    stage_a = t_hw.compose(t_rw.inverse())
    stage_b = t_hw.compose(motion).compose(t_hw.inverse())
    stage_slots = []
    placements = []
    for i in range(params.n_slots):
        lat = RigidTransform(np.eye(3), world.lattice_offset(i))
        stage_c = t_rw.compose(lat).compose(t_hw.inverse())
        stage_slots.append(stage_c)
        t_i = stage_c.compose(stage_b).compose(stage_a)
        direct = t_rw.compose(lat).compose(motion).compose(t_rw.inverse())
        if np.abs(t_i.matrix() - direct.matrix()).max() > 1e-9:
            raise InputError("stage decomposition inconsistent with direct transform")
        placements.append(t_i)

    seed_u = params.seed % 2**64
    obj_dirs = _cap_directions(params.object_points, 0.35)
    obj_w = world.object_start + OBJECT_RADIUS * obj_dirs
    obj_end_w = motion.apply_points(obj_w)
    slot_w = _slot_sample_points(params.object_points, world.slot_centers[0])

    corr_a, out_a = _make_correspondences(
        t_rw.apply_points(obj_w), t_hw.apply_points(obj_w),
        VIEW_ROBOT, VIEW_HUMAN_START, params, intr,
        np.random.default_rng((seed_u, 7, 10)),
    )
    corr_b, out_b = _make_correspondences(
        t_hw.apply_points(obj_w), t_hw.apply_points(obj_end_w),
        VIEW_HUMAN_START, VIEW_HUMAN_END, params, intr,
        np.random.default_rng((seed_u, 7, 11)),
    )
    corr_slots = []
    out_slots = []
    for i in range(params.n_slots):
        shifted = slot_w + world.lattice_offset(i)
        corr_c, out_c = _make_correspondences(
            t_hw.apply_points(slot_w), t_rw.apply_points(shifted),
            VIEW_HUMAN_START, VIEW_ROBOT, params, intr,
            np.random.default_rng((seed_u, 7, 12 + i)),
        )
        corr_slots.append(corr_c)
        out_slots.append(out_c)

    robot_depth = _quantize_depth(depth_r)
    base_cloud = lift_depth(robot_depth, intr, object_mask_r)
    post_cloud = PointCloud(placements[0].apply(base_cloud).points)
    post_pixels, _ = project_points(post_cloud, intr)
    post_mask, _ = rasterize_projection(
        post_pixels, intr.width, intr.height, dilation_radius=POST_MASK_DILATION
    )

    ground_truth = GroundTruth(
        exact_slot_index=0,
        placements=tuple(placements),
        object_mask=object_mask_r,
        exact_slot_mask=slot_masks_r[0],
        post_cloud=post_cloud,
        post_mask=post_mask,
        post_mask_dilation=POST_MASK_DILATION,
        stage_object_robot_to_human=stage_a,
        stage_object_motion=stage_b,
        stage_slots=tuple(stage_slots),
        correspondence_outliers={
            "object_robot_to_human": out_a,
            "object_motion": out_b,
            "slots": out_slots,
        },
        world_points={
            "object": obj_w,
            "object_end": obj_end_w,
            "slot": slot_w,
            "slot_offsets": np.stack(
                [world.lattice_offset(i) for i in range(params.n_slots)]
            ),
        },
        camera_poses={"human": t_hw, "robot": t_rw},
    )

    return ScenePair(
        name=f"synth-{params.seed}-k{params.n_slots}",
        human_start=SceneView(_quantize_depth(depth_h1), GrayImage(gray_h1), intr),
        human_end=SceneView(_quantize_depth(depth_hn), GrayImage(gray_hn), intr),
        robot=SceneView(robot_depth, GrayImage(gray_r), intr),
        object_mask_human_start=object_mask_h1,
        object_mask_human_end=object_mask_hn,
        object_mask_robot=object_mask_r,
        slot_mask_human_start=slot_mask_h1,
        slot_masks_robot=slot_masks_r,
        correspondences=SceneCorrespondences(corr_a, corr_b, tuple(corr_slots)),
        ground_truth=ground_truth,
    )
