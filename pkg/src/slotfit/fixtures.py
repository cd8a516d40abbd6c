"""Scene-pair fixtures: the on-disk bundle consumed by the pipeline.

A fixture directory holds one benchmark instance: three RGB-D views
(human start frame, human end frame, robot view), provider masks for the
pick object and the placement slots, raw correspondences for the three
registration stages, and an optional ground-truth sidecar. manifest.json
names everything; see README for the schema. The layout deliberately
matches what a mask/correspondence provider (tracker, matcher) would
export, so real captures can replace synthetic ones file for file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SceneLoadError
from .files import (
    read_correspondences_json,
    read_depth_png,
    read_gray_png,
    read_json,
    read_mask_png,
    read_ply,
    transform_from_dict,
    transform_to_dict,
    write_correspondences_json,
    write_depth_png,
    write_gray_png,
    write_json,
    write_mask_png,
    write_ply,
)
from .geometry import CameraIntrinsics, DepthImage, PointCloud, RigidTransform
from .masks import BinaryMask, GrayImage
from .registration import CorrespondenceSet

MANIFEST_SCHEMA = "slotfit-scene/1"
MANIFEST_NAME = "manifest.json"

VIEW_HUMAN_START = "human_start"
VIEW_HUMAN_END = "human_end"
VIEW_ROBOT = "robot"


@dataclass(frozen=True, eq=False)
class SceneView:
    """One RGB-D observation reduced to depth + gray + intrinsics."""

    depth: DepthImage
    gray: GrayImage
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        shapes = {
            "depth": (self.depth.height, self.depth.width),
            "gray": (self.gray.height, self.gray.width),
            "intrinsics": (self.intrinsics.height, self.intrinsics.width),
        }
        if len(set(shapes.values())) != 1:
            raise SceneLoadError(f"view raster dimensions disagree: {shapes}")

    @property
    def width(self) -> int:
        return self.depth.width

    @property
    def height(self) -> int:
        return self.depth.height

    def __eq__(self, other):
        return (
            isinstance(other, SceneView)
            and self.depth == other.depth
            and self.gray == other.gray
            and self.intrinsics == other.intrinsics
        )


@dataclass(frozen=True, eq=False)
class SceneCorrespondences:
    """The three stage correspondence sets (slot stage is per slot)."""

    object_robot_to_human: CorrespondenceSet
    object_motion: CorrespondenceSet
    slots: tuple[CorrespondenceSet, ...]

    def __post_init__(self):
        expected = [
            (self.object_robot_to_human, VIEW_ROBOT, VIEW_HUMAN_START, "object_robot_to_human"),
            (self.object_motion, VIEW_HUMAN_START, VIEW_HUMAN_END, "object_motion"),
        ] + [(c, VIEW_HUMAN_START, VIEW_ROBOT, f"slots[{i}]") for i, c in enumerate(self.slots)]
        for corr, src, dst, label in expected:
            if corr.src_view != src or corr.dst_view != dst:
                raise SceneLoadError(
                    f"correspondences.{label}: expected views {src} -> {dst}, "
                    f"got {corr.src_view} -> {corr.dst_view}"
                )
        object.__setattr__(self, "slots", tuple(self.slots))

    def __eq__(self, other):
        return (
            isinstance(other, SceneCorrespondences)
            and self.object_robot_to_human == other.object_robot_to_human
            and self.object_motion == other.object_motion
            and self.slots == other.slots
        )


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Benchmark annotations for one scene.

    placements holds the true per-slot transform in the robot camera
    frame. post_cloud / post_mask describe the object after placement in
    the exact slot. The stage_* transforms and the trailing bookkeeping
    fields (outlier flags, sampled world points, camera poses) are
    generator extras used by consistency checks; handwritten fixtures may
    omit them.
    """

    exact_slot_index: int
    placements: tuple[RigidTransform, ...]
    object_mask: BinaryMask
    exact_slot_mask: BinaryMask
    post_cloud: PointCloud
    post_mask: BinaryMask
    post_mask_dilation: int = 0
    stage_object_robot_to_human: RigidTransform | None = None
    stage_object_motion: RigidTransform | None = None
    stage_slots: tuple[RigidTransform, ...] | None = None
    correspondence_outliers: dict | None = None
    world_points: dict | None = None
    camera_poses: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "placements", tuple(self.placements))
        if self.stage_slots is not None:
            object.__setattr__(self, "stage_slots", tuple(self.stage_slots))
        if not (0 <= self.exact_slot_index < len(self.placements)):
            raise SceneLoadError(
                f"exact_slot_index {self.exact_slot_index} outside "
                f"{len(self.placements)} placements"
            )

    def __eq__(self, other):
        if not isinstance(other, GroundTruth):
            return False
        simple = (
            self.exact_slot_index == other.exact_slot_index
            and self.placements == other.placements
            and self.object_mask == other.object_mask
            and self.exact_slot_mask == other.exact_slot_mask
            and self.post_cloud == other.post_cloud
            and self.post_mask == other.post_mask
            and self.post_mask_dilation == other.post_mask_dilation
            and self.stage_object_robot_to_human == other.stage_object_robot_to_human
            and self.stage_object_motion == other.stage_object_motion
            and self.stage_slots == other.stage_slots
            and self.correspondence_outliers == other.correspondence_outliers
            and self.camera_poses == other.camera_poses
        )
        if not simple:
            return False
        if (self.world_points is None) != (other.world_points is None):
            return False
        if self.world_points is not None:
            if self.world_points.keys() != other.world_points.keys():
                return False
            for k in self.world_points:
                if not np.array_equal(self.world_points[k], other.world_points[k]):
                    return False
        return True


@dataclass(frozen=True, eq=False)
class ScenePair:
    """One benchmark instance: three views, masks, correspondences, GT."""

    name: str
    human_start: SceneView
    human_end: SceneView
    robot: SceneView
    object_mask_human_start: BinaryMask
    object_mask_human_end: BinaryMask
    object_mask_robot: BinaryMask
    slot_mask_human_start: BinaryMask
    slot_masks_robot: tuple[BinaryMask, ...]
    correspondences: SceneCorrespondences
    ground_truth: GroundTruth | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "slot_masks_robot", tuple(self.slot_masks_robot))
        if len(self.slot_masks_robot) < 1:
            raise SceneLoadError("scene must carry at least one robot slot mask")
        if len(self.correspondences.slots) != len(self.slot_masks_robot):
            raise SceneLoadError(
                f"{len(self.correspondences.slots)} slot correspondence sets for "
                f"{len(self.slot_masks_robot)} slot masks"
            )
        per_view = [
            (self.object_mask_human_start, self.human_start, "object_mask_human_start"),
            (self.slot_mask_human_start, self.human_start, "slot_mask_human_start"),
            (self.object_mask_human_end, self.human_end, "object_mask_human_end"),
            (self.object_mask_robot, self.robot, "object_mask_robot"),
        ] + [(m, self.robot, f"slot_masks_robot[{i}]") for i, m in enumerate(self.slot_masks_robot)]
        for mask, view, label in per_view:
            if (mask.height, mask.width) != (view.height, view.width):
                raise SceneLoadError(
                    f"{label}: mask {mask.width}x{mask.height} does not match view "
                    f"{view.width}x{view.height}"
                )
        self._validate_pixel_bounds()
        if self.ground_truth is not None:
            gt = self.ground_truth
            if len(gt.placements) != self.n_slots:
                raise SceneLoadError(
                    f"ground truth has {len(gt.placements)} placements for "
                    f"{self.n_slots} slots"
                )
            for mask, label in (
                (gt.object_mask, "ground_truth.object_mask"),
                (gt.exact_slot_mask, "ground_truth.exact_slot_mask"),
                (gt.post_mask, "ground_truth.post_mask"),
            ):
                if (mask.height, mask.width) != (self.robot.height, self.robot.width):
                    raise SceneLoadError(f"{label}: dimensions do not match robot view")

    def _validate_pixel_bounds(self):
        views = {
            VIEW_HUMAN_START: self.human_start,
            VIEW_HUMAN_END: self.human_end,
            VIEW_ROBOT: self.robot,
        }
        sets = [
            ("object_robot_to_human", self.correspondences.object_robot_to_human),
            ("object_motion", self.correspondences.object_motion),
        ] + [(f"slots[{i}]", c) for i, c in enumerate(self.correspondences.slots)]
        for label, corr in sets:
            if corr.form != "pixel":
                continue
            for side, view_name in (("src", corr.src_view), ("dst", corr.dst_view)):
                view = views[view_name]
                pts = getattr(corr, side)
                bad = np.nonzero(
                    (pts[:, 0] < 0)
                    | (pts[:, 0] > view.width - 1)
                    | (pts[:, 1] < 0)
                    | (pts[:, 1] > view.height - 1)
                )[0]
                if bad.size:
                    i = int(bad[0])
                    raise SceneLoadError(
                        f"correspondences.{label}: pair {i}: {side} pixel "
                        f"({pts[i, 0]}, {pts[i, 1]}) outside {view.width}x{view.height}"
                    )

    @property
    def n_slots(self) -> int:
        return len(self.slot_masks_robot)

    def __eq__(self, other):
        return (
            isinstance(other, ScenePair)
            and self.name == other.name
            and self.human_start == other.human_start
            and self.human_end == other.human_end
            and self.robot == other.robot
            and self.object_mask_human_start == other.object_mask_human_start
            and self.object_mask_human_end == other.object_mask_human_end
            and self.object_mask_robot == other.object_mask_robot
            and self.slot_mask_human_start == other.slot_mask_human_start
            and self.slot_masks_robot == other.slot_masks_robot
            and self.correspondences == other.correspondences
            and self.ground_truth == other.ground_truth
        )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_VIEW_FILES = {
    VIEW_HUMAN_START: ("human_start_depth.png", "human_start_gray.png"),
    VIEW_HUMAN_END: ("human_end_depth.png", "human_end_gray.png"),
    VIEW_ROBOT: ("robot_depth.png", "robot_gray.png"),
}


def write_scene(scene: ScenePair, directory) -> Path:
    """Write a fixture directory; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    views = {
        VIEW_HUMAN_START: scene.human_start,
        VIEW_HUMAN_END: scene.human_end,
        VIEW_ROBOT: scene.robot,
    }
    manifest_views = {}
    for name, view in views.items():
        depth_file, gray_file = _VIEW_FILES[name]
        write_depth_png(directory / depth_file, view.depth)
        write_gray_png(directory / gray_file, view.gray)
        manifest_views[name] = {
            "depth": depth_file,
            "gray": gray_file,
            "intrinsics": view.intrinsics.as_dict(),
        }

    mask_files = {
        "object_human_start": ("mask_object_human_start.png", scene.object_mask_human_start),
        "object_human_end": ("mask_object_human_end.png", scene.object_mask_human_end),
        "object_robot": ("mask_object_robot.png", scene.object_mask_robot),
        "slot_human_start": ("mask_slot_human_start.png", scene.slot_mask_human_start),
    }
    manifest_masks = {}
    for key, (fname, mask) in mask_files.items():
        write_mask_png(directory / fname, mask)
        manifest_masks[key] = fname
    slot_mask_names = []
    for i, mask in enumerate(scene.slot_masks_robot):
        fname = f"mask_slot_robot_{i}.png"
        write_mask_png(directory / fname, mask)
        slot_mask_names.append(fname)
    manifest_masks["slots_robot"] = slot_mask_names

    corr = scene.correspondences
    write_correspondences_json(
        directory / "corr_object_robot_to_human.json", corr.object_robot_to_human
    )
    write_correspondences_json(directory / "corr_object_motion.json", corr.object_motion)
    slot_corr_names = []
    for i, c in enumerate(corr.slots):
        fname = f"corr_slot_{i}.json"
        write_correspondences_json(directory / fname, c)
        slot_corr_names.append(fname)
    manifest_corr = {
        "object_robot_to_human": "corr_object_robot_to_human.json",
        "object_motion": "corr_object_motion.json",
        "slots": slot_corr_names,
    }

    gt_name = None
    if scene.ground_truth is not None:
        gt_name = "ground_truth.json"
        _write_ground_truth(scene.ground_truth, directory, manifest_masks)

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "name": scene.name,
        "slots": scene.n_slots,
        "views": manifest_views,
        "masks": manifest_masks,
        "correspondences": manifest_corr,
        "ground_truth": gt_name,
    }
    manifest_path = directory / MANIFEST_NAME
    write_json(manifest_path, manifest)
    return manifest_path


def _write_ground_truth(gt: GroundTruth, directory: Path, manifest_masks: dict) -> None:
    write_ply(directory / "gt_post_cloud.ply", gt.post_cloud)
    write_mask_png(directory / "gt_post_mask.png", gt.post_mask)
    # The GT object / exact-slot masks coincide with provider masks in
    # synthetic fixtures; they are stored as their own files regardless so
    # real fixtures can annotate them independently.
    write_mask_png(directory / "gt_object_mask.png", gt.object_mask)
    write_mask_png(directory / "gt_exact_slot_mask.png", gt.exact_slot_mask)
    payload = {
        "exact_slot_index": gt.exact_slot_index,
        "placements": [transform_to_dict(t) for t in gt.placements],
        "object_mask": "gt_object_mask.png",
        "exact_slot_mask": "gt_exact_slot_mask.png",
        "post_cloud": "gt_post_cloud.ply",
        "post_mask": "gt_post_mask.png",
        "post_mask_dilation": gt.post_mask_dilation,
    }
    if gt.stage_object_robot_to_human is not None:
        payload["stages"] = {
            "object_robot_to_human": transform_to_dict(gt.stage_object_robot_to_human),
            "object_motion": transform_to_dict(gt.stage_object_motion),
            "slots": [transform_to_dict(t) for t in gt.stage_slots],
        }
    if gt.correspondence_outliers is not None:
        payload["correspondence_outliers"] = gt.correspondence_outliers
    if gt.world_points is not None:
        payload["world_points"] = {
            k: [[float(x) for x in p] for p in v] for k, v in gt.world_points.items()
        }
    if gt.camera_poses is not None:
        payload["camera_poses"] = {
            k: transform_to_dict(t) for k, t in gt.camera_poses.items()
        }
    write_json(directory / "ground_truth.json", payload)


def load_scene(path) -> ScenePair:
    """Load and fully validate a fixture from its directory or manifest path."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME if path.is_dir() else path
    manifest = read_json(manifest_path)
    directory = manifest_path.parent

    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise SceneLoadError(
            f"{manifest_path}: unsupported schema {manifest.get('schema')!r}"
        )

    def require(section: dict, key: str, where: str):
        if key not in section:
            raise SceneLoadError(f"{manifest_path}: missing {where}.{key}")
        return section[key]

    views_section = require(manifest, "views", "manifest")
    views = {}
    for name in (VIEW_HUMAN_START, VIEW_HUMAN_END, VIEW_ROBOT):
        spec = require(views_section, name, "views")
        views[name] = SceneView(
            depth=read_depth_png(directory / require(spec, "depth", f"views.{name}")),
            gray=read_gray_png(directory / require(spec, "gray", f"views.{name}")),
            intrinsics=CameraIntrinsics.from_dict(
                require(spec, "intrinsics", f"views.{name}")
            ),
        )

    masks_section = require(manifest, "masks", "manifest")
    masks = {
        key: read_mask_png(directory / require(masks_section, key, "masks"))
        for key in ("object_human_start", "object_human_end", "object_robot", "slot_human_start")
    }
    slot_masks = tuple(
        read_mask_png(directory / fname)
        for fname in require(masks_section, "slots_robot", "masks")
    )

    corr_section = require(manifest, "correspondences", "manifest")
    correspondences = SceneCorrespondences(
        object_robot_to_human=read_correspondences_json(
            directory / require(corr_section, "object_robot_to_human", "correspondences")
        ),
        object_motion=read_correspondences_json(
            directory / require(corr_section, "object_motion", "correspondences")
        ),
        slots=tuple(
            read_correspondences_json(directory / fname)
            for fname in require(corr_section, "slots", "correspondences")
        ),
    )

    ground_truth = None
    gt_name = manifest.get("ground_truth")
    if gt_name:
        ground_truth = _load_ground_truth(directory / gt_name)

    scene = ScenePair(
        name=manifest.get("name", directory.name),
        human_start=views[VIEW_HUMAN_START],
        human_end=views[VIEW_HUMAN_END],
        robot=views[VIEW_ROBOT],
        object_mask_human_start=masks["object_human_start"],
        object_mask_human_end=masks["object_human_end"],
        object_mask_robot=masks["object_robot"],
        slot_mask_human_start=masks["slot_human_start"],
        slot_masks_robot=slot_masks,
        correspondences=correspondences,
        ground_truth=ground_truth,
    )
    declared = manifest.get("slots")
    if declared is not None and declared != scene.n_slots:
        raise SceneLoadError(
            f"{manifest_path}: manifest declares {declared} slots, found {scene.n_slots}"
        )
    return scene


def _load_ground_truth(path: Path) -> GroundTruth:
    data = read_json(path)
    directory = path.parent
    for key in ("exact_slot_index", "placements", "object_mask", "exact_slot_mask",
                "post_cloud", "post_mask"):
        if key not in data:
            raise SceneLoadError(f"{path}: missing ground-truth field {key!r}")
    stages = data.get("stages")
    world_points = data.get("world_points")
    camera_poses = data.get("camera_poses")
    return GroundTruth(
        exact_slot_index=int(data["exact_slot_index"]),
        placements=tuple(transform_from_dict(d) for d in data["placements"]),
        object_mask=read_mask_png(directory / data["object_mask"]),
        exact_slot_mask=read_mask_png(directory / data["exact_slot_mask"]),
        post_cloud=read_ply(directory / data["post_cloud"]),
        post_mask=read_mask_png(directory / data["post_mask"]),
        post_mask_dilation=int(data.get("post_mask_dilation", 0)),
        stage_object_robot_to_human=(
            transform_from_dict(stages["object_robot_to_human"]) if stages else None
        ),
        stage_object_motion=transform_from_dict(stages["object_motion"]) if stages else None,
        stage_slots=(
            tuple(transform_from_dict(d) for d in stages["slots"]) if stages else None
        ),
        correspondence_outliers=data.get("correspondence_outliers"),
        world_points=(
            {k: np.asarray(v, dtype=np.float64) for k, v in world_points.items()}
            if world_points
            else None
        ),
        camera_poses=(
            {k: transform_from_dict(d) for k, d in camera_poses.items()}
            if camera_poses
            else None
        ),
    )
