"""Per-slot placement transforms.

The final transform for slot i chains the three stage estimates, applied
right to left: first the object transform from the robot scene into the
human start frame, then the motion the person demonstrated, then the slot
transform from the human scene back into the robot view.

A stage that fails (too few valid pairs, no RANSAC consensus) downgrades
to the benchmark fallback: identity transform plus an empty slot mask,
with the failed stage recorded in the diagnostics. An object-stage
failure downgrades every slot of the scene, since nothing object-related
could be estimated.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InputError, InsufficientDataError, NoConsensusError
from .fixtures import ScenePair, SceneView
from .geometry import RigidTransform
from .masks import BinaryMask, round_half_away
from .registration import CorrespondenceSet, RansacParams, ransac_register

STAGE_OBJECT_ROBOT_TO_HUMAN = "object_robot_to_human"
STAGE_OBJECT_MOTION = "object_motion"
STAGE_SLOT = "slot"

_SEED_TAGS = {STAGE_OBJECT_ROBOT_TO_HUMAN: 0, STAGE_OBJECT_MOTION: 1}
_SLOT_SEED_BASE = 100


@dataclass(frozen=True)
class TransformTriplet:
    """The three stage transforms feeding one slot's placement."""

    obj_robot_to_human: RigidTransform
    obj_human_motion: RigidTransform
    slot_human_to_robot: RigidTransform


def chain(triplet: TransformTriplet) -> RigidTransform:
    """Chain the stage transforms into the per-slot placement transform."""
    return triplet.slot_human_to_robot.compose(
        triplet.obj_human_motion.compose(triplet.obj_robot_to_human)
    )


@dataclass(frozen=True, eq=False)
class StageDiagnostics:
    stage: str
    pair_count: int
    dropped_pairs: int
    inlier_count: int
    rms_error: float
    iterations: int
    error: str | None = None

    @property
    def succeeded(self) -> bool:
        return self.error is None

    def __eq__(self, other):
        return isinstance(other, StageDiagnostics) and (
            (self.stage, self.pair_count, self.dropped_pairs, self.inlier_count,
             self.rms_error, self.iterations, self.error)
            == (other.stage, other.pair_count, other.dropped_pairs, other.inlier_count,
                other.rms_error, other.iterations, other.error)
        )


@dataclass(frozen=True, eq=False)
class SlotPlacement:
    """One slot's result: mask, transform, and per-stage diagnostics.

    fallback placements always carry the identity transform and an empty
    mask; diagnostics (when present) record which stage failed.
    """

    slot_index: int
    slot_mask: BinaryMask
    transform: RigidTransform
    diagnostics: dict
    fallback: bool


def lift_correspondences(
    corr: CorrespondenceSet, src_view: SceneView, dst_view: SceneView
) -> tuple[np.ndarray, np.ndarray, int]:
    """Resolve a correspondence set to paired 3D points.

    Point-form pairs pass through unchanged. Pixel-form pairs are lifted
    through each view's depth at the nearest pixel; pairs whose depth is
    invalid (or whose rounded pixel leaves the image) on either side are
    dropped. Returns (src (N, 3), dst (N, 3), dropped_count).
    """
    if corr.form == "point":
        return corr.src, corr.dst, 0

    def lift_side(pixels: np.ndarray, view: SceneView):
        u = round_half_away(pixels[:, 0]).astype(np.int64)
        v = round_half_away(pixels[:, 1]).astype(np.int64)
        inside = (u >= 0) & (u < view.width) & (v >= 0) & (v < view.height)
        z = np.zeros(len(u))
        z[inside] = view.depth.values[v[inside], u[inside]]
        valid = inside & (z > 0)
        k = view.intrinsics
        x = (u - k.cx) * z / k.fx
        y = (v - k.cy) * z / k.fy
        return np.stack([x, y, z], axis=1), valid

    src_pts, src_ok = lift_side(corr.src, src_view)
    dst_pts, dst_ok = lift_side(corr.dst, dst_view)
    keep = src_ok & dst_ok
    dropped = int(len(corr) - keep.sum())
    return src_pts[keep], dst_pts[keep], dropped


def _stage_seed(base_seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([base_seed % 2**64, tag]).generate_state(1)[0])


def _run_stage(
    stage: str,
    corr: CorrespondenceSet,
    src_view: SceneView,
    dst_view: SceneView,
    params: RansacParams,
    seed_tag: int,
) -> tuple[RigidTransform | None, StageDiagnostics]:
    src, dst, dropped = lift_correspondences(corr, src_view, dst_view)
    stage_params = replace(params, seed=_stage_seed(params.seed, seed_tag))
    try:
        result = ransac_register(src, dst, stage_params)
    except (InsufficientDataError, NoConsensusError) as e:
        return None, StageDiagnostics(
            stage=stage,
            pair_count=len(corr),
            dropped_pairs=dropped,
            inlier_count=0,
            rms_error=0.0,
            iterations=0,
            error=str(e),
        )
    return result.transform, StageDiagnostics(
        stage=stage,
        pair_count=len(corr),
        dropped_pairs=dropped,
        inlier_count=int(len(result.inlier_indices)),
        rms_error=result.rms_inlier_error,
        iterations=result.iterations_used,
    )


def compute_placements(scene: ScenePair, ransac: RansacParams) -> list[SlotPlacement]:
    """Estimate one placement transform per robot-view slot.

    The two object stages are estimated once and shared across slots.
    Deterministic for a fixed ransac.seed: each stage draws from a seed
    derived from (seed, stage), so slot ordering or parallel scheduling
    cannot change results. Results are ordered by slot_index.
    """
    t_r2h, diag_r2h = _run_stage(
        STAGE_OBJECT_ROBOT_TO_HUMAN,
        scene.correspondences.object_robot_to_human,
        scene.robot,
        scene.human_start,
        ransac,
        _SEED_TAGS[STAGE_OBJECT_ROBOT_TO_HUMAN],
    )
    t_motion, diag_motion = _run_stage(
        STAGE_OBJECT_MOTION,
        scene.correspondences.object_motion,
        scene.human_start,
        scene.human_end,
        ransac,
        _SEED_TAGS[STAGE_OBJECT_MOTION],
    )
    object_stages_ok = t_r2h is not None and t_motion is not None

    placements = []
    for i, corr_slot in enumerate(scene.correspondences.slots):
        if not object_stages_ok:
            slot_diag = StageDiagnostics(
                stage=STAGE_SLOT,
                pair_count=len(corr_slot),
                dropped_pairs=0,
                inlier_count=0,
                rms_error=0.0,
                iterations=0,
                error="skipped: object stage failed",
            )
            placements.append(
                _fallback_placement(scene, i, diag_r2h, diag_motion, slot_diag)
            )
            continue
        t_slot, diag_slot = _run_stage(
            STAGE_SLOT, corr_slot, scene.human_start, scene.robot, ransac,
            _SLOT_SEED_BASE + i,
        )
        if t_slot is None:
            placements.append(
                _fallback_placement(scene, i, diag_r2h, diag_motion, diag_slot)
            )
            continue
        transform = chain(TransformTriplet(t_r2h, t_motion, t_slot))
        placements.append(
            SlotPlacement(
                slot_index=i,
                slot_mask=scene.slot_masks_robot[i],
                transform=transform,
                diagnostics={
                    STAGE_OBJECT_ROBOT_TO_HUMAN: diag_r2h,
                    STAGE_OBJECT_MOTION: diag_motion,
                    STAGE_SLOT: diag_slot,
                },
                fallback=False,
            )
        )
    return placements


def _fallback_placement(scene, slot_index, diag_r2h, diag_motion, diag_slot):
    return SlotPlacement(
        slot_index=slot_index,
        slot_mask=BinaryMask.empty(scene.robot.width, scene.robot.height),
        transform=RigidTransform.identity(),
        diagnostics={
            STAGE_OBJECT_ROBOT_TO_HUMAN: diag_r2h,
            STAGE_OBJECT_MOTION: diag_motion,
            STAGE_SLOT: diag_slot,
        },
        fallback=True,
    )


# ---------------------------------------------------------------------------
# Placement report (JSON)
# ---------------------------------------------------------------------------


def placement_report(placements: list[SlotPlacement], config: dict) -> dict:
    """Serializable report: per-slot transform (rotation row-major), flags,
    and stage inlier/dropped-pair counts, plus the effective config."""
    entries = []
    for p in placements:
        entries.append(
            {
                "slot_index": p.slot_index,
                "transform": {
                    "rotation": [float(x) for x in p.transform.rotation.reshape(-1)],
                    "translation": [float(x) for x in p.transform.translation],
                },
                "fallback": p.fallback,
                "inlier_counts": {
                    name: diag.inlier_count for name, diag in p.diagnostics.items()
                },
                "dropped_pairs": {
                    name: diag.dropped_pairs for name, diag in p.diagnostics.items()
                },
                "stage_errors": {
                    name: diag.error
                    for name, diag in p.diagnostics.items()
                    if diag.error is not None
                },
            }
        )
    return {"schema": "slotfit-placements/1", "config": config, "placements": entries}


def placements_from_report(report: dict, scene: ScenePair) -> list[SlotPlacement]:
    """Rebuild placements from a report for scoring against `scene`.

    Fallback entries get an empty mask; others reuse the scene's provider
    slot mask for their index. Diagnostics are not reconstructed.
    """
    if "placements" not in report:
        raise InputError("placement report missing 'placements'")
    out = []
    for entry in report["placements"]:
        idx = int(entry["slot_index"])
        if not (0 <= idx < scene.n_slots):
            raise InputError(f"placement slot_index {idx} outside scene with {scene.n_slots} slots")
        fallback = bool(entry["fallback"])
        rot = np.asarray(entry["transform"]["rotation"], dtype=np.float64).reshape(3, 3)
        trans = np.asarray(entry["transform"]["translation"], dtype=np.float64)
        out.append(
            SlotPlacement(
                slot_index=idx,
                slot_mask=(
                    BinaryMask.empty(scene.robot.width, scene.robot.height)
                    if fallback
                    else scene.slot_masks_robot[idx]
                ),
                transform=RigidTransform(rot, trans),
                diagnostics={},
                fallback=fallback,
            )
        )
    return sorted(out, key=lambda p: p.slot_index)
