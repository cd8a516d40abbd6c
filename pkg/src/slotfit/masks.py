"""Binary masks, mask metrics, projection rasterization, and the
image-difference slot baseline.

Masks serialize as 8-bit PNG with 255 = set (see files.py). Grayscale
conversion from RGB uses BT.601 luma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import binary_dilation

from .errors import InputError
from .geometry import _frozen


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Per-pixel boolean raster, shape (height, width)."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise InputError(f"mask must be non-empty 2-D, got shape {b.shape}")
        object.__setattr__(self, "bits", _frozen(b.astype(bool)))

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def area(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        return isinstance(other, BinaryMask) and np.array_equal(self.bits, other.bits)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale raster, shape (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise InputError(f"gray image must be 2-D, got shape {v.shape}")
        if v.dtype != np.uint8:
            if np.any(v < 0) or np.any(v > 255):
                raise InputError("gray values must lie in [0, 255]")
            v = v.astype(np.uint8)
        object.__setattr__(self, "values", _frozen(v))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.values, other.values)


def gray_from_rgb(rgb: np.ndarray) -> GrayImage:
    """BT.601 luma (0.299 R + 0.587 G + 0.114 B), rounded to nearest."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise InputError(f"expected (H, W, 3) RGB array, got {rgb.shape}")
    luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    return GrayImage(np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8))


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """|a ∩ b| / |a ∪ b|; 1.0 when both empty, 0.0 when exactly one is."""
    if a.bits.shape != b.bits.shape:
        raise InputError(f"mask dimensions differ: {a.bits.shape} vs {b.bits.shape}")
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(a.bits, b.bits).sum())
    return inter / union


def precision(pred: BinaryMask, gt: BinaryMask) -> float:
    """|pred ∩ gt| / |pred|; 0.0 for an empty prediction."""
    if pred.bits.shape != gt.bits.shape:
        raise InputError(f"mask dimensions differ: {pred.bits.shape} vs {gt.bits.shape}")
    denom = pred.area()
    if denom == 0:
        return 0.0
    return int(np.logical_and(pred.bits, gt.bits).sum()) / denom


def recall(pred: BinaryMask, gt: BinaryMask) -> float:
    """|pred ∩ gt| / |gt|; 0.0 for an empty ground truth."""
    if pred.bits.shape != gt.bits.shape:
        raise InputError(f"mask dimensions differ: {pred.bits.shape} vs {gt.bits.shape}")
    denom = gt.area()
    if denom == 0:
        return 0.0
    return int(np.logical_and(pred.bits, gt.bits).sum()) / denom


def f1(pred: BinaryMask, gt: BinaryMask) -> float:
    """Harmonic mean of precision and recall; 1.0 when both masks are empty."""
    if pred.area() == 0 and gt.area() == 0:
        return 1.0
    p = precision(pred, gt)
    r = recall(pred, gt)
    if p + r == 0:
        return 0.0
    return 2.0 * p * r / (p + r)


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round half away from zero (np.round would round half to even)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def rasterize_projection(
    pixels: np.ndarray, width: int, height: int, dilation_radius: int = 0
) -> tuple[BinaryMask, int]:
    """Mark the nearest pixel of each (u, v) coordinate.

    Coordinates are rounded half away from zero; out-of-bounds coordinates
    are dropped. Returns (mask, dropped_count). dilation_radius > 0 grows
    the result by a disk of that radius (off by default).
    """
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    bits = np.zeros((height, width), dtype=bool)
    if pixels.shape[0] == 0:
        return BinaryMask(bits), 0
    u = round_half_away(pixels[:, 0]).astype(np.int64)
    v = round_half_away(pixels[:, 1]).astype(np.int64)
    inside = (u >= 0) & (u < width) & (v >= 0) & (v < height)
    dropped = int(pixels.shape[0] - inside.sum())
    bits[v[inside], u[inside]] = True
    if dilation_radius > 0:
        r = int(dilation_radius)
        yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
        disk = xx * xx + yy * yy <= r * r
        bits = binary_dilation(bits, structure=disk)
    return BinaryMask(bits), dropped


def diff_slot_mask(start: GrayImage, end: GrayImage, threshold: int = 50) -> BinaryMask:
    """Threshold the absolute grayscale difference of two frames.

    A pixel is set iff |start - end| > threshold. This is the simple
    image-difference slot-detection baseline.
    """
    if start.values.shape != end.values.shape:
        raise InputError(
            f"image dimensions differ: {start.values.shape} vs {end.values.shape}"
        )
    if not (0 <= threshold <= 255):
        raise InputError(f"threshold must be in [0, 255], got {threshold}")
    diff = np.abs(start.values.astype(np.int16) - end.values.astype(np.int16))
    return BinaryMask(diff > threshold)
