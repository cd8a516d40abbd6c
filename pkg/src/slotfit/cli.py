"""Command-line surface.

Subcommands: gen, pipeline, evaluate, slot-diff, register, lift.
Exit codes: 0 success, 1 runtime/input error, 2 usage error.
Config precedence: flags > config file (--config or $SLOTFIT_CONFIG) >
built-in defaults; every report embeds the resolved config.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import SlotfitError
from .files import (
    read_correspondences_json,
    read_depth_png,
    read_gray_png,
    read_intrinsics_json,
    read_json,
    read_mask_png,
    transform_to_dict,
    write_json,
    write_mask_png,
    write_ply,
)
from .fixtures import SceneView, load_scene, write_scene
from .geometry import lift_depth
from .masks import GrayImage, diff_slot_mask, f1, iou
from .metrics import build_report, report_to_dict, score_scene
from .placement import (
    compute_placements,
    lift_correspondences,
    placement_report,
    placements_from_report,
)
from .registration import RansacParams, ransac_register
from .report import render_report_figures, write_metrics_csv
from .synth import SynthParams, generate_scene

CONFIG_ENV_VAR = "SLOTFIT_CONFIG"

DEFAULT_DIFF_THRESHOLD = 50
DEFAULT_EMD_SUBSAMPLE = 256
DEFAULT_EMD_SEED = 0
DEFAULT_JOBS = 1


def _fraction(text: str) -> float:
    value = float(text)
    if not (0.0 <= value < 1.0):
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _nonnegative_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _image_size(text: str) -> tuple:
    try:
        w, h = text.lower().split("x")
        return (int(w), int(h))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from e


def _view_offset(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"expected dx,dy,dz,yaw_deg, got {text!r}")
    return tuple(float(p) for p in parts)


def _load_config(args) -> dict:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}
    return read_json(path)


def _resolve_ransac(args, cfg: dict) -> RansacParams:
    section = cfg.get("ransac", {})

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return section.get(key, default)

    return RansacParams(
        inlier_threshold=pick(args.inlier_threshold, "inlier_threshold", 0.01),
        max_iterations=pick(args.max_iterations, "max_iterations", 1000),
        min_inliers=pick(args.min_inliers, "min_inliers", 3),
        confidence=pick(args.confidence, "confidence", 0.999),
        seed=pick(args.seed, "seed", 0),
    )


def _ransac_config_dict(params: RansacParams) -> dict:
    return {
        "inlier_threshold": params.inlier_threshold,
        "max_iterations": params.max_iterations,
        "min_inliers": params.min_inliers,
        "confidence": params.confidence,
        "seed": params.seed,
    }


def _add_ransac_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--inlier-threshold", type=_positive_float, default=None,
                        help="RANSAC inlier threshold in meters (default 0.01)")
    parser.add_argument("--max-iterations", type=_positive_int, default=None,
                        help="RANSAC iteration budget (default 1000)")
    parser.add_argument("--min-inliers", type=_positive_int, default=None,
                        help="minimum consensus size before fallback (default 3)")
    parser.add_argument("--confidence", type=_fraction, default=None,
                        help="early-exit confidence in (0,1) (default 0.999)")
    parser.add_argument("--seed", type=int, default=None,
                        help="base RANSAC seed (default 0)")
    parser.add_argument("--config", default=None,
                        help=f"config file (also ${CONFIG_ENV_VAR})")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    params = SynthParams(
        seed=args.seed,
        n_slots=args.slots,
        slot_spacing=args.spacing,
        object_points=args.object_points,
        view_offset=args.view_offset,
        noise_sigma=args.noise_sigma,
        outlier_fraction=args.outliers,
        image_size=args.image_size,
        correspondence_form=args.corr_form,
        demo_yaw_deg=args.demo_yaw,
    )
    scene = generate_scene(params)
    manifest = write_scene(scene, args.out)
    print(f"wrote {manifest} ({scene.n_slots} slots)")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    ransac = _resolve_ransac(args, cfg)
    scene = load_scene(args.scene)
    placements = compute_placements(scene, ransac)
    out = Path(args.out) if args.out else Path(args.scene) / "placements.json"
    report = placement_report(
        placements, {"ransac": _ransac_config_dict(ransac), "scene": scene.name}
    )
    write_json(out, report)
    fallbacks = sum(1 for p in placements if p.fallback)
    print(f"wrote {out} ({len(placements)} slots, {fallbacks} fallback)")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    emd_subsample = args.emd_subsample if args.emd_subsample is not None else cfg.get(
        "emd_subsample", DEFAULT_EMD_SUBSAMPLE
    )
    emd_seed = args.emd_seed if args.emd_seed is not None else cfg.get(
        "emd_seed", DEFAULT_EMD_SEED
    )
    jobs = args.jobs if args.jobs is not None else cfg.get("jobs", DEFAULT_JOBS)

    scene_dirs = [Path(p) for p in args.scenes]
    if args.predictions:
        if len(args.predictions) != len(scene_dirs):
            raise SlotfitError(
                f"{len(args.predictions)} prediction files for {len(scene_dirs)} scenes"
            )
        prediction_paths = [Path(p) for p in args.predictions]
    else:
        prediction_paths = [d / "placements.json" for d in scene_dirs]

    def score_one(pair):
        scene_dir, pred_path = pair
        scene = load_scene(scene_dir)
        if scene.ground_truth is None:
            return None, {"scene": scene.name, "reason": "no ground truth"}
        prediction = read_json(pred_path)
        placements = placements_from_report(prediction, scene)
        return (
            score_scene(
                placements, scene, emd_subsample=emd_subsample, emd_seed=emd_seed
            ),
            None,
        )

    pairs = list(zip(scene_dirs, prediction_paths))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(score_one, pairs))
    else:
        outcomes = [score_one(p) for p in pairs]

    scores = [s for s, _ in outcomes if s is not None]
    skipped = [w for _, w in outcomes if w is not None]
    for w in skipped:
        print(f"warning: skipped {w['scene']}: {w['reason']}", file=sys.stderr)

    config = {
        "emd_subsample": emd_subsample,
        "emd_seed": emd_seed,
        "jobs": jobs,
        "scenes": [str(d) for d in scene_dirs],
        "predictions": [str(p) for p in prediction_paths],
    }
    report = build_report(scores, skipped, config)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "evaluation.json", report_to_dict(report))
    write_metrics_csv(report, out_dir / "evaluation.csv")
    if args.figures:
        render_report_figures(report, out_dir / "figures")
    summary = ", ".join(
        f"{name} {report.aggregate.get(field, float('nan')):.4g}"
        for name, field in (
            ("Obj", "obj_iou"),
            ("Slot", "slot_iou"),
            ("Prec.", "transform_precision"),
            ("CD", "chamfer"),
            ("EMD", "emd"),
        )
    )
    print(f"evaluated {report.scene_count} scenes: {summary}")
    return 0


def cmd_slot_diff(args) -> int:
    cfg = _load_config(args)
    threshold = args.threshold if args.threshold is not None else cfg.get(
        "diff_threshold", DEFAULT_DIFF_THRESHOLD
    )
    start = read_gray_png(args.start)
    end = read_gray_png(args.end)
    mask = diff_slot_mask(start, end, threshold)
    write_mask_png(args.out, mask)
    print(f"wrote {args.out} (threshold {threshold}, area {mask.area()})")
    if args.gt:
        gt = read_mask_png(args.gt)
        print(f"F1 {f1(mask, gt):.4f} IoU {iou(mask, gt):.4f}")
    return 0


def cmd_register(args) -> int:
    cfg = _load_config(args)
    ransac = _resolve_ransac(args, cfg)
    corr = read_correspondences_json(args.correspondences)
    if corr.form == "pixel":
        needed = (args.src_depth, args.src_intrinsics, args.dst_depth, args.dst_intrinsics)
        if any(v is None for v in needed):
            raise SlotfitError(
                "pixel-form correspondences need --src-depth/--src-intrinsics/"
                "--dst-depth/--dst-intrinsics"
            )

        def view(depth_path, intr_path):
            depth = read_depth_png(depth_path)
            intr = read_intrinsics_json(intr_path)
            blank = GrayImage(np.zeros(depth.values.shape, dtype=np.uint8))
            return SceneView(depth, blank, intr)

        src_view = view(args.src_depth, args.src_intrinsics)
        dst_view = view(args.dst_depth, args.dst_intrinsics)
        src, dst, dropped = lift_correspondences(corr, src_view, dst_view)
    else:
        src, dst, dropped = corr.src, corr.dst, 0
    result = ransac_register(src, dst, ransac)
    payload = {
        "transform": transform_to_dict(result.transform),
        "inlier_count": int(len(result.inlier_indices)),
        "inlier_indices": [int(i) for i in result.inlier_indices],
        "rms_inlier_error": result.rms_inlier_error,
        "iterations_used": result.iterations_used,
        "dropped_pairs": dropped,
        "config": {"ransac": _ransac_config_dict(ransac)},
    }
    if args.out:
        write_json(args.out, payload)
        print(f"wrote {args.out} ({payload['inlier_count']} inliers)")
    else:
        import json

        print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def cmd_lift(args) -> int:
    depth = read_depth_png(args.depth)
    intrinsics = read_intrinsics_json(args.intrinsics)
    mask = read_mask_png(args.mask) if args.mask else None
    cloud = lift_depth(depth, intrinsics, mask)
    write_ply(args.out, cloud)
    print(f"wrote {args.out} ({len(cloud)} points)")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slotfit",
        description="Per-slot placement transforms and benchmark evaluation "
        "for demonstration/robot RGB-D scene pairs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic scene fixture")
    p.add_argument("--out", required=True, help="output fixture directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--slots", type=_positive_int, default=3)
    p.add_argument("--spacing", type=_positive_float, default=0.08,
                   help="slot lattice spacing in meters")
    p.add_argument("--object-points", type=_positive_int, default=120,
                   help="correspondence sample points per stage")
    p.add_argument("--noise-sigma", type=_nonnegative_float, default=0.0,
                   help="correspondence noise sigma in meters")
    p.add_argument("--outliers", type=_fraction, default=0.0,
                   help="outlier fraction in [0, 1)")
    p.add_argument("--image-size", type=_image_size, default=(320, 240),
                   metavar="WxH")
    p.add_argument("--view-offset", type=_view_offset, default=(0.06, 0.04, -0.05, 12.0),
                   metavar="DX,DY,DZ,YAW")
    p.add_argument("--corr-form", choices=("point", "pixel"), default="point")
    p.add_argument("--demo-yaw", type=float, default=20.0,
                   help="demonstrated placement yaw in degrees")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("pipeline", help="compute per-slot placement transforms")
    p.add_argument("scene", help="fixture directory or manifest path")
    p.add_argument("--out", default=None, help="report path (default <scene>/placements.json)")
    _add_ransac_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("evaluate", help="score placement reports against fixtures")
    p.add_argument("scenes", nargs="+", help="fixture directories")
    p.add_argument("--predictions", nargs="+", default=None,
                   help="placement reports, one per scene "
                   "(default <scene>/placements.json)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True,
                   help="render summary figures (default on)")
    p.add_argument("--emd-subsample", type=_positive_int, default=None)
    p.add_argument("--emd-seed", type=int, default=None)
    p.add_argument("--jobs", type=_positive_int, default=None,
                   help="scene-level parallelism")
    p.add_argument("--config", default=None, help=f"config file (also ${CONFIG_ENV_VAR})")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("slot-diff", help="image-difference slot baseline")
    p.add_argument("start", help="start gray PNG")
    p.add_argument("end", help="end gray PNG")
    p.add_argument("--threshold", type=int, default=None, choices=range(0, 256),
                   metavar="[0-255]")
    p.add_argument("--out", required=True, help="output mask PNG")
    p.add_argument("--gt", default=None, help="ground-truth mask PNG for F1/IoU")
    p.add_argument("--config", default=None, help=f"config file (also ${CONFIG_ENV_VAR})")
    p.set_defaults(func=cmd_slot_diff)

    p = sub.add_parser("register", help="register one correspondence file (debugging)")
    p.add_argument("correspondences", help="correspondence JSON")
    p.add_argument("--src-depth", default=None)
    p.add_argument("--src-intrinsics", default=None)
    p.add_argument("--dst-depth", default=None)
    p.add_argument("--dst-intrinsics", default=None)
    p.add_argument("--out", default=None, help="output JSON (default: stdout)")
    _add_ransac_flags(p)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("lift", help="dump a depth image as an ASCII PLY cloud")
    p.add_argument("depth", help="16-bit depth PNG (millimeters)")
    p.add_argument("intrinsics", help="intrinsics JSON")
    p.add_argument("--mask", default=None, help="optional mask PNG")
    p.add_argument("--out", required=True, help="output PLY path")
    p.set_defaults(func=cmd_lift)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SlotfitError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
