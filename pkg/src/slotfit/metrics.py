"""Point-cloud distances and benchmark scoring.

Conventions (echoed in every report header):
  - Chamfer distance uses squared Euclidean nearest-neighbor distances,
    symmetrically averaged:  CD = 1/2 * (mean_p min_q ||p-q||^2 +
    mean_q min_p ||p-q||^2). Units: meters^2.
  - EMD subsamples both clouds to a fixed size (uniform without
    replacement when the cloud is larger, with replacement when smaller,
    seeded), then solves the exact optimal assignment under Euclidean
    cost, normalized by the subsample size. Units: meters.
  - A scene whose exact-slot prediction is missing (or fell back) is
    scored with the benchmark fallback: empty masks and the identity
    transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .errors import InputError
from .fixtures import ScenePair
from .geometry import PointCloud, RigidTransform, lift_depth, project_points
from .masks import BinaryMask, iou, precision, rasterize_projection
from .placement import SlotPlacement


def _points(x) -> np.ndarray:
    pts = x.points if isinstance(x, PointCloud) else np.asarray(x, dtype=np.float64)
    return pts.reshape(-1, 3)


def chamfer(p, q) -> float:
    """Symmetric squared-distance Chamfer distance, in meters^2."""
    a = _points(p)
    b = _points(q)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise InputError("chamfer distance of an empty point cloud")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return 0.5 * (float(np.mean(d_ab**2)) + float(np.mean(d_ba**2)))


def _resample(points: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    if n >= size:
        idx = rng.choice(n, size=size, replace=False)
    else:
        idx = rng.choice(n, size=size, replace=True)
    return points[idx]


def emd(p, q, subsample: int = 256, seed: int = 0) -> float:
    """Earth Mover's distance via exact optimal assignment, in meters.

    Both clouds are independently resampled to exactly `subsample` points
    (stream 0 for p, stream 1 for q, derived from `seed`), then matched
    one-to-one minimizing total Euclidean cost; the result is the optimal
    cost divided by the subsample size.
    """
    a = _points(p)
    b = _points(q)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise InputError("EMD of an empty point cloud")
    if subsample < 1:
        raise InputError(f"subsample must be >= 1, got {subsample}")
    seed_u = seed % 2**64
    a = _resample(a, subsample, np.random.default_rng((seed_u, 0)))
    b = _resample(b, subsample, np.random.default_rng((seed_u, 1)))
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum()) / subsample


# ---------------------------------------------------------------------------
# Benchmark scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiSlotScore:
    """Greedy one-to-one matching of predicted vs annotated slot masks.

    mean_iou averages matched IoUs over max(predicted, annotated), so
    unmatched entries on either side count as zero. average_precision is
    the fraction of matched pairs with IoU >= 0.5.
    """

    mean_iou: float
    average_precision: float
    matched: int
    predicted: int
    annotated: int


@dataclass(frozen=True)
class SceneScore:
    scene: str
    obj_iou: float
    slot_iou: float
    transform_precision: float
    chamfer: float
    emd: float
    used_fallback: bool
    multislot: MultiSlotScore | None = None


def score_multislot(pred_masks, gt_masks, iou_threshold: float = 0.5) -> MultiSlotScore:
    """Match predicted slot masks to annotated slot masks by descending IoU."""
    pred_masks = list(pred_masks)
    gt_masks = list(gt_masks)
    n_pred, n_gt = len(pred_masks), len(gt_masks)
    if n_gt == 0:
        raise InputError("multi-slot scoring needs at least one annotated slot")
    if n_pred == 0:
        return MultiSlotScore(0.0, 0.0, 0, 0, n_gt)
    matrix = np.array([[iou(p, g) for g in gt_masks] for p in pred_masks])
    matched_ious = []
    free_pred = set(range(n_pred))
    free_gt = set(range(n_gt))
    while free_pred and free_gt:
        best = max(
            ((matrix[i, j], i, j) for i in free_pred for j in free_gt),
            key=lambda t: t[0],
        )
        if best[0] <= 0.0:
            break
        matched_ious.append(best[0])
        free_pred.remove(best[1])
        free_gt.remove(best[2])
    denom = max(n_pred, n_gt)
    mean_iou = sum(matched_ious) / denom if denom else 0.0
    ap = (
        sum(1 for v in matched_ious if v >= iou_threshold) / len(matched_ious)
        if matched_ious
        else 0.0
    )
    return MultiSlotScore(mean_iou, ap, len(matched_ious), n_pred, n_gt)


def score_scene(
    placements: list[SlotPlacement] | None,
    scene: ScenePair,
    *,
    emd_subsample: int = 256,
    emd_seed: int = 0,
) -> SceneScore:
    """Score one scene's predictions against its ground truth.

    The object cloud for the transform metrics is lifted from the robot
    depth under the GT object mask, so the transform is judged in
    isolation from mask quality. A missing prediction, or a fallback on
    the exact slot, invokes the benchmark fallback: empty masks and the
    identity transform (distances are still computed, under identity).
    """
    gt = scene.ground_truth
    if gt is None:
        raise InputError(f"scene {scene.name!r} has no ground-truth annotations")

    entry = None
    if placements:
        for p in placements:
            if p.slot_index == gt.exact_slot_index:
                entry = p
                break
    used_fallback = entry is None or entry.fallback

    robot = scene.robot
    if used_fallback:
        pred_object = BinaryMask.empty(robot.width, robot.height)
        pred_slot = BinaryMask.empty(robot.width, robot.height)
        transform = RigidTransform.identity()
    else:
        pred_object = scene.object_mask_robot
        pred_slot = entry.slot_mask
        transform = entry.transform

    obj_iou = iou(pred_object, gt.object_mask)
    slot_iou = iou(pred_slot, gt.exact_slot_mask)

    base_cloud = lift_depth(robot.depth, robot.intrinsics, gt.object_mask)
    if len(base_cloud) == 0:
        raise InputError(f"scene {scene.name!r}: GT object mask lifts to an empty cloud")
    moved = transform.apply(base_cloud)
    pixels, _ = project_points(moved, robot.intrinsics)
    raster, _ = rasterize_projection(pixels, robot.width, robot.height)
    transform_precision = precision(raster, gt.post_mask)
    cd = chamfer(moved, gt.post_cloud)
    e = emd(moved, gt.post_cloud, subsample=emd_subsample, seed=emd_seed)

    pred_slot_masks = [p.slot_mask for p in placements if not p.fallback] if placements else []
    multislot = score_multislot(pred_slot_masks, list(scene.slot_masks_robot))

    return SceneScore(
        scene=scene.name,
        obj_iou=obj_iou,
        slot_iou=slot_iou,
        transform_precision=transform_precision,
        chamfer=cd,
        emd=e,
        used_fallback=used_fallback,
        multislot=multislot,
    )


AGGREGATE_FIELDS = ("obj_iou", "slot_iou", "transform_precision", "chamfer", "emd")


@dataclass(frozen=True)
class EvaluationReport:
    """Per-scene records plus aggregate means and the effective config."""

    scenes: tuple[SceneScore, ...]
    aggregate: dict
    scene_count: int
    skipped: tuple[dict, ...]
    config: dict


def build_report(scores, skipped, config) -> EvaluationReport:
    scores = tuple(scores)
    skipped = tuple(skipped)
    aggregate = {}
    if scores:
        for name in AGGREGATE_FIELDS:
            aggregate[name] = float(np.mean([getattr(s, name) for s in scores]))
        aggregate["fallback_rate"] = float(
            np.mean([1.0 if s.used_fallback else 0.0 for s in scores])
        )
        with_ms = [s.multislot for s in scores if s.multislot is not None]
        if with_ms:
            aggregate["multislot_mean_iou"] = float(np.mean([m.mean_iou for m in with_ms]))
            aggregate["multislot_ap"] = float(
                np.mean([m.average_precision for m in with_ms])
            )
    return EvaluationReport(
        scenes=scores,
        aggregate=aggregate,
        scene_count=len(scores),
        skipped=skipped,
        config=dict(config),
    )


def report_to_dict(report: EvaluationReport) -> dict:
    scenes = []
    for s in report.scenes:
        record = {
            "scene": s.scene,
            "obj_iou": s.obj_iou,
            "slot_iou": s.slot_iou,
            "transform_precision": s.transform_precision,
            "chamfer": s.chamfer,
            "emd": s.emd,
            "used_fallback": s.used_fallback,
        }
        if s.multislot is not None:
            record["multislot"] = {
                "mean_iou": s.multislot.mean_iou,
                "average_precision": s.multislot.average_precision,
                "matched": s.multislot.matched,
                "predicted": s.multislot.predicted,
                "annotated": s.multislot.annotated,
            }
        scenes.append(record)
    return {
        "schema": "slotfit-evaluation/1",
        "config": report.config,
        "scene_count": report.scene_count,
        "scenes": scenes,
        "aggregate": report.aggregate,
        "skipped": list(report.skipped),
    }
