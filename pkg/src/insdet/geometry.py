"""Pixel-space geometry: boxes, masks, IoU, bounding squares, size tags.

Boxes are axis-aligned, half-open continuous intervals ``[min, max)`` in the
image frame (origin top-left, x to the right, y down). IoU is computed
analytically on these intervals, never on a rasterized grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

SMALL_MAX_AREA = 200.0 ** 2
MEDIUM_MAX_AREA = 400.0 ** 2


class SizeTag(str, Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with half-open extents; zero-area boxes are invalid."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for v in (self.x_min, self.y_min, self.x_max, self.y_max):
            if not math.isfinite(v):
                raise ValueError(f"non-finite box coordinate: {v!r}")
            if v < 0:
                raise ValueError(f"negative box coordinate: {v!r}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box: ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BoundingBox":
        if w <= 0 or h <= 0:
            raise ValueError(f"degenerate box: width={w}, height={h}")
        return cls(x, y, x + w, y + h)

    def to_xywh(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.width, self.height)


@dataclass(frozen=True)
class Mask:
    """Binary footprint; ``pixels`` is a row-major (height, width) bool array."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=bool)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    def is_empty(self) -> bool:
        return not bool(self.pixels.any())

    def tight_box(self) -> BoundingBox:
        """Smallest box containing every set pixel (integer, half-open)."""
        ys, xs = np.nonzero(self.pixels)
        if ys.size == 0:
            raise ValueError("empty proposal")
        return BoundingBox(
            float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1)
        )


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; disjoint boxes yield 0."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def size_tag(box: BoundingBox) -> SizeTag:
    """Tag a box by area: small < 200^2 <= medium <= 400^2 < large.

    The medium band is closed on both ends so the tagging is total.
    """
    area = box.area
    if area < SMALL_MAX_AREA:
        return SizeTag.SMALL
    if area <= MEDIUM_MAX_AREA:
        return SizeTag.MEDIUM
    return SizeTag.LARGE


def _clamp_interval(lo: float, side: float, limit: float) -> float:
    """Shift [lo, lo+side] into [0, limit], preferring the original position."""
    lo = min(lo, limit - side)
    return max(lo, 0.0)


def min_bounding_square(mask: Mask, image_w: int, image_h: int) -> BoundingBox:
    """Smallest square box containing the mask's tight box.

    The square is centered on the tight box, translated into the image bounds,
    and only shrunk when its side exceeds the image's short side. Containment
    of the tight box is preserved whenever the final side still covers the
    corresponding tight-box dimension.
    """
    tight = mask.tight_box()
    if tight.x_max > image_w or tight.y_max > image_h:
        raise ValueError("mask extends outside the image bounds")
    side = max(tight.width, tight.height)
    side = min(side, float(image_w), float(image_h))
    cx = 0.5 * (tight.x_min + tight.x_max)
    cy = 0.5 * (tight.y_min + tight.y_max)
    x0 = _clamp_interval(cx - side / 2.0, side, float(image_w))
    y0 = _clamp_interval(cy - side / 2.0, side, float(image_h))
    return BoundingBox(x0, y0, x0 + side, y0 + side)
