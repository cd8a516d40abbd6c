"""Camera model, SE(3) algebra, and depth-image lifting.

Coordinate conventions (OpenCV style):
  - Camera frame: x right, y down, z forward; the camera looks along +z.
  - Pixel (u, v): u = column, v = row, origin at the top-left pixel center.
  - Pinhole model:  u = fx * x / z + cx,   v = fy * y / z + cy
    and its inverse x = (u - cx) * z / fx, y = (v - cy) * z / fy.
  - Depth values are meters; 0.0 marks an invalid pixel.

All types are immutable after construction (arrays are frozen read-only)
and every operation is a pure function, so everything here is safe to
share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

# Orthonormality slack accepted at construction time, and the tighter
# drift bound past which compose() re-projects onto SO(3).
ROTATION_TOLERANCE = 1e-9
REORTHONORMALIZE_DRIFT = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise InputError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    def matrix(self) -> np.ndarray:
        """3x3 K matrix."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def as_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        try:
            return cls(
                fx=float(d["fx"]),
                fy=float(d["fy"]),
                cx=float(d["cx"]),
                cy=float(d["cy"]),
                width=int(d["width"]),
                height=int(d["height"]),
            )
        except KeyError as e:
            raise InputError(f"intrinsics missing field {e}") from e


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Per-pixel depth in meters, shape (height, width); 0.0 = invalid."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise InputError(f"depth image must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InputError("depth values must be finite and >= 0")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        return isinstance(other, DepthImage) and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """An SE(3) element: p -> rotation @ p + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise InputError(f"rotation must be 3x3, got {r.shape}")
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise InputError("transform entries must be finite")
        residual = np.abs(r.T @ r - np.eye(3)).max()
        if residual > ROTATION_TOLERANCE:
            raise InputError(f"rotation not orthonormal (residual {residual:.3e})")
        if abs(np.linalg.det(r) - 1.0) > ROTATION_TOLERANCE:
            raise InputError(f"rotation determinant {np.linalg.det(r):.12f} != +1")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise InputError(f"homogeneous matrix must be 4x4, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Composition applying `other` first: (self.compose(other))(p) = self(other(p))."""
        r = self.rotation @ other.rotation
        t = self.rotation @ other.translation + self.translation
        drift = np.abs(r.T @ r - np.eye(3)).max()
        if drift > REORTHONORMALIZE_DRIFT:
            r = nearest_rotation(r)
        return RigidTransform(r, t)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, cloud: "PointCloud") -> "PointCloud":
        """Transform every point; source-pixel indices are preserved."""
        pts = cloud.points @ self.rotation.T + self.translation
        return PointCloud(pts, cloud.pixel_indices)

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def __eq__(self, other):
        return (
            isinstance(other, RigidTransform)
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Project a near-rotation onto SO(3) (polar decomposition, det-corrected)."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def rotation_angle(r: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, in radians.

    Uses atan2 of the skew norm against the trace so tiny angles are
    resolved to machine precision (acos of the trace alone bottoms out
    near sqrt(eps) ~ 2e-8).
    """
    c = (np.trace(r) - 1.0) / 2.0
    s = np.linalg.norm(r - r.T) / (2.0 * math.sqrt(2.0))
    return float(math.atan2(s, c))


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered (N, 3) points in meters, camera frame.

    pixel_indices, when present, is the (N, 2) integer (u, v) source pixel
    of each point; indices are unique.
    """

    points: np.ndarray
    pixel_indices: np.ndarray | None = field(default=None)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise InputError("point cloud contains NaN or Inf")
        object.__setattr__(self, "points", _frozen(p))
        if self.pixel_indices is not None:
            idx = np.asarray(self.pixel_indices, dtype=np.int64).reshape(-1, 2)
            if idx.shape[0] != p.shape[0]:
                raise InputError(
                    f"{idx.shape[0]} pixel indices for {p.shape[0]} points"
                )
            if np.any(idx < 0):
                raise InputError("pixel indices must be non-negative")
            if len(np.unique(idx, axis=0)) != idx.shape[0]:
                raise InputError("pixel indices must be unique")
            object.__setattr__(self, "pixel_indices", _frozen(idx))

    def __len__(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return False
        if not np.array_equal(self.points, other.points):
            return False
        if (self.pixel_indices is None) != (other.pixel_indices is None):
            return False
        return self.pixel_indices is None or np.array_equal(
            self.pixel_indices, other.pixel_indices
        )


def lift_depth(
    depth: DepthImage,
    intrinsics: CameraIntrinsics,
    mask=None,
) -> PointCloud:
    """Lift every valid (depth > 0) pixel, optionally restricted to a mask.

    Returns one point per pixel via the inverse pinhole model, with the
    (u, v) source pixel recorded per point. Invalid pixels are skipped.
    """
    if (depth.height, depth.width) != (intrinsics.height, intrinsics.width):
        raise InputError(
            f"depth {depth.width}x{depth.height} does not match "
            f"intrinsics {intrinsics.width}x{intrinsics.height}"
        )
    select = depth.values > 0
    if mask is not None:
        if mask.bits.shape != depth.values.shape:
            raise InputError(
                f"mask {mask.bits.shape} does not match depth {depth.values.shape}"
            )
        select = select & mask.bits
    v_idx, u_idx = np.nonzero(select)
    z = depth.values[v_idx, u_idx]
    x = (u_idx - intrinsics.cx) * z / intrinsics.fx
    y = (v_idx - intrinsics.cy) * z / intrinsics.fy
    points = np.stack([x, y, z], axis=1)
    pixels = np.stack([u_idx, v_idx], axis=1).astype(np.int64)
    return PointCloud(points, pixels)


def project_points(
    cloud: PointCloud, intrinsics: CameraIntrinsics
) -> tuple[np.ndarray, int]:
    """Project points to (u, v) pixel coordinates.

    Points with z <= 0 are dropped; returns (pixels (M, 2) float64,
    dropped_count).
    """
    pts = cloud.points
    ahead = pts[:, 2] > 0
    dropped = int(pts.shape[0] - ahead.sum())
    pts = pts[ahead]
    u = intrinsics.fx * pts[:, 0] / pts[:, 2] + intrinsics.cx
    v = intrinsics.fy * pts[:, 1] / pts[:, 2] + intrinsics.cy
    return np.stack([u, v], axis=1), dropped
