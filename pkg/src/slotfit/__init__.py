"""slotfit: per-slot 6-DoF placement transforms from demonstration and
robot RGB-D views, with benchmark metrics and a synthetic scene oracle."""

from .errors import (
    DegenerateConfigurationError,
    InputError,
    InsufficientDataError,
    NoConsensusError,
    SceneLoadError,
    SlotfitError,
)
from .geometry import (
    CameraIntrinsics,
    DepthImage,
    PointCloud,
    RigidTransform,
    lift_depth,
    project_points,
)
from .masks import BinaryMask, GrayImage, diff_slot_mask, f1, gray_from_rgb, iou, precision, rasterize_projection
from .metrics import (
    EvaluationReport,
    MultiSlotScore,
    SceneScore,
    build_report,
    chamfer,
    emd,
    score_multislot,
    score_scene,
)
from .placement import (
    SlotPlacement,
    StageDiagnostics,
    TransformTriplet,
    chain,
    compute_placements,
    lift_correspondences,
    placement_report,
    placements_from_report,
)
from .registration import (
    CorrespondenceSet,
    RansacParams,
    RegistrationResult,
    procrustes_rigid,
    ransac_register,
)
from .fixtures import GroundTruth, SceneCorrespondences, ScenePair, SceneView, load_scene, write_scene
from .synth import SynthParams, generate_scene

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "CameraIntrinsics",
    "CorrespondenceSet",
    "DegenerateConfigurationError",
    "DepthImage",
    "EvaluationReport",
    "GrayImage",
    "GroundTruth",
    "InputError",
    "InsufficientDataError",
    "MultiSlotScore",
    "NoConsensusError",
    "PointCloud",
    "RansacParams",
    "RegistrationResult",
    "RigidTransform",
    "SceneCorrespondences",
    "SceneLoadError",
    "ScenePair",
    "SceneScore",
    "SceneView",
    "SlotPlacement",
    "SlotfitError",
    "StageDiagnostics",
    "SynthParams",
    "TransformTriplet",
    "build_report",
    "chain",
    "chamfer",
    "compute_placements",
    "diff_slot_mask",
    "emd",
    "f1",
    "generate_scene",
    "gray_from_rgb",
    "iou",
    "lift_correspondences",
    "lift_depth",
    "load_scene",
    "placement_report",
    "placements_from_report",
    "precision",
    "procrustes_rigid",
    "project_points",
    "ransac_register",
    "rasterize_projection",
    "score_multislot",
    "score_scene",
    "write_scene",
]
