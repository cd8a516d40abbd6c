"""Rigid registration from 3D correspondences: Procrustes + RANSAC.

The least-squares rigid fit is the SVD construction on the cross
covariance of the mean-centered clouds (Kabsch / Umeyama with scale fixed
at 1), with the determinant sign corrected so the result is always a
proper rotation. See e.g. Arun, Huang & Blostein (1987).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfigurationError, InsufficientDataError, InputError, NoConsensusError
from .geometry import PointCloud, RigidTransform

# Ratio of the middle to the largest singular value of the centered source
# below which the sample is treated as collinear (rotation about the line
# would be unconstrained).
COLLINEARITY_RATIO = 1e-12

MIN_SAMPLE = 3


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Paired observations between two views.

    src/dst are (N, 2) pixel coordinates when form == "pixel" or (N, 3)
    camera-frame points when form == "point"; row i of src corresponds to
    row i of dst.
    """

    src: np.ndarray
    dst: np.ndarray
    src_view: str
    dst_view: str
    form: str = "pixel"

    def __post_init__(self):
        if self.form not in ("pixel", "point"):
            raise InputError(f"correspondence form must be 'pixel' or 'point', got {self.form!r}")
        width = 2 if self.form == "pixel" else 3
        src = np.array(self.src, dtype=np.float64, copy=True).reshape(-1, width)
        dst = np.array(self.dst, dtype=np.float64, copy=True).reshape(-1, width)
        if src.shape != dst.shape:
            raise InputError(f"src/dst pair counts differ: {src.shape[0]} vs {dst.shape[0]}")
        for name, a in (("src", src), ("dst", dst)):
            if not np.all(np.isfinite(a)):
                raise InputError(f"{name} contains NaN or Inf")
            a.flags.writeable = False
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)

    def __len__(self) -> int:
        return self.src.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, CorrespondenceSet)
            and self.form == other.form
            and self.src_view == other.src_view
            and self.dst_view == other.dst_view
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
        )


@dataclass(frozen=True)
class RansacParams:
    """Hypothesize-and-verify parameters; defaults follow common RGB-D practice."""

    inlier_threshold: float = 0.01
    max_iterations: int = 1000
    min_inliers: int = 3
    confidence: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if self.inlier_threshold <= 0:
            raise InputError(f"inlier_threshold must be > 0, got {self.inlier_threshold}")
        if self.max_iterations < 1:
            raise InputError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not (0.0 < self.confidence < 1.0):
            raise InputError(f"confidence must lie in (0, 1), got {self.confidence}")
        if self.min_inliers < MIN_SAMPLE:
            raise InputError(f"min_inliers must be >= {MIN_SAMPLE}, got {self.min_inliers}")


@dataclass(frozen=True, eq=False)
class RegistrationResult:
    transform: RigidTransform
    inlier_indices: np.ndarray
    rms_inlier_error: float
    iterations_used: int

    def __eq__(self, other):
        return (
            isinstance(other, RegistrationResult)
            and self.transform == other.transform
            and np.array_equal(self.inlier_indices, other.inlier_indices)
            and self.rms_inlier_error == other.rms_inlier_error
            and self.iterations_used == other.iterations_used
        )


def _as_points(x) -> np.ndarray:
    if isinstance(x, PointCloud):
        return x.points
    return np.asarray(x, dtype=np.float64).reshape(-1, 3)


def _is_collinear(centered: np.ndarray) -> bool:
    s = np.linalg.svd(centered, compute_uv=False)
    return s[1] < COLLINEARITY_RATIO * s[0] if s[0] > 0 else True


def procrustes_rigid(src, dst) -> RigidTransform:
    """Least-squares SE(3) fit: minimizes sum ||R @ src_i + t - dst_i||^2.

    src and dst are equal-length (N, 3) arrays or PointClouds, N >= 3,
    paired row-by-row. Scale is fixed at 1. Raises
    InsufficientDataError for N < 3 and DegenerateConfigurationError for
    collinear sources.
    """
    a = _as_points(src)
    b = _as_points(dst)
    if a.shape[0] != b.shape[0]:
        raise InputError(f"src/dst pair counts differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < MIN_SAMPLE:
        raise InsufficientDataError(f"need >= {MIN_SAMPLE} pairs, got {a.shape[0]}")
    centroid_a = a.mean(axis=0)
    centroid_b = b.mean(axis=0)
    ca = a - centroid_a
    cb = b - centroid_b
    if _is_collinear(ca):
        raise DegenerateConfigurationError("source points are collinear")
    h = ca.T @ cb
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = centroid_b - rot @ centroid_a
    return RigidTransform(rot, t)


def _residuals(transform: RigidTransform, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(a @ transform.rotation.T + transform.translation - b, axis=1)


def _iterations_needed(inlier_ratio: float, confidence: float) -> int:
    w3 = inlier_ratio**3
    if w3 >= 1.0:
        return 1
    if w3 <= 0.0:
        return np.iinfo(np.int64).max
    return int(math.ceil(math.log(1.0 - confidence) / math.log(1.0 - w3)))


def ransac_register(src, dst, params: RansacParams) -> RegistrationResult:
    """Robust rigid registration of paired 3D correspondences.

    Standard hypothesize-and-verify: sample 3 non-collinear pairs, fit
    procrustes_rigid, count pairs with residual < inlier_threshold, keep
    the best consensus, then refit on all its inliers. Early exit once the
    confidence bound is met. Fully deterministic for a fixed seed: the RNG
    stream of iteration i is derived from (seed, i), so results do not
    depend on evaluation order.
    """
    a = _as_points(src)
    b = _as_points(dst)
    if a.shape[0] != b.shape[0]:
        raise InputError(f"src/dst pair counts differ: {a.shape[0]} vs {b.shape[0]}")
    n = a.shape[0]
    if n < MIN_SAMPLE:
        raise InsufficientDataError(f"need >= {MIN_SAMPLE} correspondences, got {n}")

    best_count = 0
    best_transform: RigidTransform | None = None
    resamples = 0
    iterations_used = 0

    for it in range(params.max_iterations):
        iterations_used = it + 1
        # Degenerate samples are resampled (fresh substream per attempt)
        # without consuming the iteration budget, up to max_iterations
        # resamples in total.
        sample = None
        attempt = 0
        while True:
            rng = np.random.default_rng((params.seed, it, attempt))
            idx = rng.choice(n, size=MIN_SAMPLE, replace=False)
            trial = a[idx]
            if not _is_collinear(trial - trial.mean(axis=0)):
                sample = idx
                break
            resamples += 1
            attempt += 1
            if resamples >= params.max_iterations:
                break
        if sample is None:
            break

        try:
            hypothesis = procrustes_rigid(a[sample], b[sample])
        except DegenerateConfigurationError:
            continue
        count = int((_residuals(hypothesis, a, b) < params.inlier_threshold).sum())
        if count > best_count:
            best_count = count
            best_transform = hypothesis
        if best_count > 0 and iterations_used >= _iterations_needed(
            best_count / n, params.confidence
        ):
            break

    if best_transform is None or best_count < params.min_inliers:
        raise NoConsensusError(
            f"best consensus {best_count} below min_inliers {params.min_inliers}"
        )

    inliers = np.nonzero(_residuals(best_transform, a, b) < params.inlier_threshold)[0]
    try:
        refined = procrustes_rigid(a[inliers], b[inliers])
    except DegenerateConfigurationError as e:
        raise NoConsensusError(f"consensus set is degenerate: {e}") from e
    rms = float(np.sqrt(np.mean(_residuals(refined, a[inliers], b[inliers]) ** 2)))
    return RegistrationResult(
        transform=refined,
        inlier_indices=np.sort(inliers).astype(np.int64),
        rms_inlier_error=rms,
        iterations_used=iterations_used,
    )
