"""Bounding-box value types, conversions and IoU.

Boxes are continuous rectangles in pixel coordinates (no +1 convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box stored as top-left corner plus size."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError(f"non-finite box {self!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=float)

    @classmethod
    def from_array(cls, a) -> "BoundingBox":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    @classmethod
    def from_xyxy(cls, x1: float, y1: float, x2: float, y2: float) -> "BoundingBox":
        return cls(x1, y1, x2 - x1, y2 - y1)


@dataclass(frozen=True)
class CenterBox:
    """Box stored as center plus size; the Kalman state parameterization."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.cx, self.cy, self.w, self.h)):
            raise ValueError(f"non-finite box {self!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size, got w={self.w}, h={self.h}")

    def to_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=float)


def tlwh_to_center(b: BoundingBox) -> CenterBox:
    return CenterBox(b.x + b.w / 2.0, b.y + b.h / 2.0, b.w, b.h)


def center_to_tlwh(c: CenterBox) -> BoundingBox:
    return BoundingBox(c.cx - c.w / 2.0, c.cy - c.h / 2.0, c.w, c.h)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; exactly 0.0 for disjoint or touching boxes."""
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # rounding in the corner arithmetic can push the ratio a hair past 1
    return min(inter / (a.area + b.area - inter), 1.0)


def boxes_to_array(boxes: Sequence[BoundingBox]) -> np.ndarray:
    """Stack boxes into an (n, 4) tlwh array."""
    if len(boxes) == 0:
        return np.zeros((0, 4), dtype=float)
    return np.array([[b.x, b.y, b.w, b.h] for b in boxes], dtype=float)


def iou_matrix_tlwh(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (n, 4) and (m, 4) tlwh arrays."""
    rows = np.asarray(rows, dtype=float).reshape(-1, 4)
    cols = np.asarray(cols, dtype=float).reshape(-1, 4)
    if rows.shape[0] == 0 or cols.shape[0] == 0:
        return np.zeros((rows.shape[0], cols.shape[0]), dtype=float)
    r1 = rows[:, None, :2]
    r2 = r1 + rows[:, None, 2:]
    c1 = cols[None, :, :2]
    c2 = c1 + cols[None, :, 2:]
    wh = np.clip(np.minimum(r2, c2) - np.maximum(r1, c1), 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_r = rows[:, 2] * rows[:, 3]
    area_c = cols[:, 2] * cols[:, 3]
    union = area_r[:, None] + area_c[None, :] - inter
    return np.minimum(inter / union, 1.0)


def iou_distance_matrix(rows: Sequence[BoundingBox], cols: Sequence[BoundingBox]) -> np.ndarray:
    """Matrix of ``1 - iou`` with shape ``(len(rows), len(cols))``."""
    return 1.0 - iou_matrix_tlwh(boxes_to_array(rows), boxes_to_array(cols))
