"""On-disk formats.

  - Depth rasters: 16-bit grayscale PNG, value = millimeters (0 invalid).
  - Masks: 8-bit grayscale PNG, 255 = set.
  - Gray images: 8-bit grayscale PNG.
  - Intrinsics: JSON object {fx, fy, cx, cy, width, height}.
  - Correspondences: JSON object with src_view / dst_view / form header and
    a pairs array of {src: [u, v] | [x, y, z], dst: ...}.
  - Point clouds: ASCII PLY with double x/y/z properties.

JSON is written with sorted keys so regeneration is byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputError, SceneLoadError
from .geometry import CameraIntrinsics, DepthImage, PointCloud, RigidTransform
from .masks import BinaryMask, GrayImage, round_half_away
from .registration import CorrespondenceSet

MAX_DEPTH_METERS = 65.535  # uint16 millimeter ceiling


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def read_json(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise SceneLoadError(f"file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SceneLoadError(f"{path}: malformed JSON: {e}") from e


def write_depth_png(path, depth: DepthImage) -> None:
    if np.any(depth.values > MAX_DEPTH_METERS):
        raise InputError(f"depth exceeds {MAX_DEPTH_METERS} m, cannot store as 16-bit mm")
    mm = round_half_away(depth.values * 1000.0).astype(np.uint16)
    Image.fromarray(mm).save(path)


def read_depth_png(path) -> DepthImage:
    mm = _read_png(path)
    if mm.dtype != np.uint16:
        raise SceneLoadError(f"{path}: expected 16-bit depth PNG, got {mm.dtype}")
    return DepthImage(mm.astype(np.float64) / 1000.0)


def write_mask_png(path, mask: BinaryMask) -> None:
    Image.fromarray(np.where(mask.bits, 255, 0).astype(np.uint8)).save(path)


def read_mask_png(path) -> BinaryMask:
    raw = _read_png(path)
    return BinaryMask(raw > 127)


def write_gray_png(path, image: GrayImage) -> None:
    Image.fromarray(image.values).save(path)


def read_gray_png(path) -> GrayImage:
    raw = _read_png(path)
    if raw.ndim == 3:
        raise SceneLoadError(f"{path}: expected single-channel gray PNG")
    return GrayImage(raw.astype(np.uint8))


def _read_png(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise SceneLoadError(f"file not found: {path}")
    with Image.open(path) as im:
        return np.array(im)


def write_intrinsics_json(path, intrinsics: CameraIntrinsics) -> None:
    write_json(path, intrinsics.as_dict())


def read_intrinsics_json(path) -> CameraIntrinsics:
    return CameraIntrinsics.from_dict(read_json(path))


def transform_to_dict(t: RigidTransform) -> dict:
    return {
        "rotation": [float(x) for x in t.rotation.reshape(-1)],
        "translation": [float(x) for x in t.translation],
    }


def transform_from_dict(d: dict) -> RigidTransform:
    try:
        rot = np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3)
        trans = np.asarray(d["translation"], dtype=np.float64)
    except (KeyError, ValueError) as e:
        raise InputError(f"malformed transform record: {e}") from e
    return RigidTransform(rot, trans)


def write_correspondences_json(path, corr: CorrespondenceSet) -> None:
    pairs = [
        {"src": [float(x) for x in s], "dst": [float(x) for x in d]}
        for s, d in zip(corr.src, corr.dst)
    ]
    write_json(
        path,
        {
            "src_view": corr.src_view,
            "dst_view": corr.dst_view,
            "form": corr.form,
            "pairs": pairs,
        },
    )


def read_correspondences_json(path) -> CorrespondenceSet:
    data = read_json(path)
    for key in ("src_view", "dst_view", "form", "pairs"):
        if key not in data:
            raise SceneLoadError(f"{path}: missing correspondence field {key!r}")
    width = 2 if data["form"] == "pixel" else 3
    src, dst = [], []
    for i, pair in enumerate(data["pairs"]):
        s, d = pair.get("src"), pair.get("dst")
        if s is None or d is None or len(s) != width or len(d) != width:
            raise SceneLoadError(
                f"{path}: pair {i}: expected src/dst of length {width} for form "
                f"{data['form']!r}"
            )
        src.append(s)
        dst.append(d)
    return CorrespondenceSet(
        src=np.asarray(src, dtype=np.float64).reshape(-1, width),
        dst=np.asarray(dst, dtype=np.float64).reshape(-1, width),
        src_view=data["src_view"],
        dst_view=data["dst_view"],
        form=data["form"],
    )


def write_ply(path, cloud: PointCloud) -> None:
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]
    for p in cloud.points:
        lines.append(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path) -> PointCloud:
    path = Path(path)
    if not path.is_file():
        raise SceneLoadError(f"file not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise SceneLoadError(f"{path}: not a PLY file")
    count = None
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        token = line.strip()
        if token.startswith("element vertex"):
            count = int(token.split()[-1])
        if token == "end_header":
            body_start = i + 1
            break
    if count is None or body_start is None:
        raise SceneLoadError(f"{path}: malformed PLY header")
    rows = []
    for line in lines[body_start : body_start + count]:
        parts = line.split()
        try:
            rows.append([float(parts[0]), float(parts[1]), float(parts[2])])
        except (IndexError, ValueError) as e:
            raise SceneLoadError(f"{path}: malformed PLY vertex row {line!r}") from e
    if len(rows) != count:
        raise SceneLoadError(f"{path}: expected {count} vertices, found {len(rows)}")
    return PointCloud(np.asarray(rows, dtype=np.float64).reshape(-1, 3))
