"""Axis-aligned boxes, overlap, map-cell coordinates and greedy NMS.

Boxes are continuous ``(x, y, w, h)`` with a top-left origin and
``area = w * h`` (no +1 pixel convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyRegionError, InvalidParameterError


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if type(v) not in (int, float):
                # numpy scalars and the like become plain floats
                v = float(v)
                object.__setattr__(self, name, v)
            if not math.isfinite(v):
                raise InvalidParameterError(f"box {name} must be finite, got {v!r}")
        if not (self.w > 0 and self.h > 0):
            raise InvalidParameterError(f"degenerate box w={self.w!r} h={self.h!r}")

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "Box":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    @classmethod
    def from_xyxy(cls, x1: float, y1: float, x2: float, y2: float) -> "Box":
        return cls(x1, y1, x2 - x1, y2 - y1)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    @property
    def area(self) -> float:
        return self.w * self.h

    def translate(self, dx: float, dy: float) -> "Box":
        return Box(self.x + dx, self.y + dy, self.w, self.h)

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class ScoredBox:
    box: Box
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise InvalidParameterError(f"score must be finite, got {self.score!r}")


@dataclass(frozen=True)
class MapFrame:
    """Ties map cells to image pixels.

    ``origin_x``/``origin_y`` locate the center of cell (0, 0) in the
    network-input frame; dividing by ``scale_x``/``scale_y`` maps back to
    original image pixels.
    """

    origin_x: float
    origin_y: float
    stride: float
    scale_x: float = 1.0
    scale_y: float = 1.0

    def __post_init__(self):
        if not (self.stride > 0 and self.scale_x > 0 and self.scale_y > 0):
            raise InvalidParameterError(
                f"stride and scales must be positive: {self.stride}, {self.scale_x}, {self.scale_y}"
            )

    @property
    def spacing_x(self) -> float:
        """Horizontal cell spacing in image pixels."""
        return self.stride / self.scale_x

    @property
    def spacing_y(self) -> float:
        return self.stride / self.scale_y


def intersection(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: Box, b: Box) -> float:
    inter = intersection(a, b)
    if inter == 0.0:
        return 0.0
    # areas from the same corner arithmetic as the intersection, so iou(a, a) == 1
    area_a = (a.x2 - a.x) * (a.y2 - a.y)
    area_b = (b.x2 - b.x) * (b.y2 - b.y)
    return inter / (area_a + area_b - inter)


def iou_matrix(a: Sequence[Box], b: Sequence[Box]) -> np.ndarray:
    """Pairwise IoU, shape ``(len(a), len(b))``."""
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    A = np.array([[q.x, q.y, q.x2, q.y2] for q in a], dtype=float)
    B = np.array([[q.x, q.y, q.x2, q.y2] for q in b], dtype=float)
    iw = np.minimum(A[:, None, 2], B[None, :, 2]) - np.maximum(A[:, None, 0], B[None, :, 0])
    ih = np.minimum(A[:, None, 3], B[None, :, 3]) - np.maximum(A[:, None, 1], B[None, :, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = (A[:, 2] - A[:, 0]) * (A[:, 3] - A[:, 1])
    area_b = (B[:, 2] - B[:, 0]) * (B[:, 3] - B[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union


def nms_indices(candidates: Sequence[ScoredBox], iou_threshold: float = 0.5) -> list[int]:
    """Indices of boxes kept by greedy NMS, in descending score order.

    A candidate is dropped iff its IoU with an already kept box is strictly
    greater than ``iou_threshold``. Equal scores keep input order.
    """
    if not (0 < iou_threshold <= 1):
        raise InvalidParameterError(f"iou_threshold must be in (0, 1], got {iou_threshold!r}")
    n = len(candidates)
    if n == 0:
        return []
    scores = np.array([c.score for c in candidates], dtype=float)
    # stable sort on -score keeps lower input index first among ties
    order = np.argsort(-scores, kind="stable")
    ious = iou_matrix([c.box for c in candidates], [c.box for c in candidates])
    suppressed = np.zeros(n, dtype=bool)
    keep = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(int(i))
        suppressed |= ious[i] > iou_threshold
    return keep


def nms(candidates: Sequence[ScoredBox], iou_threshold: float = 0.5) -> list[ScoredBox]:
    return [candidates[i] for i in nms_indices(candidates, iou_threshold)]


def cell_to_pixel(frame: MapFrame, cell_row: float, cell_col: float) -> tuple[float, float]:
    """Pixel position of a cell center. Fractional indices are allowed."""
    x = (frame.origin_x + cell_col * frame.stride) / frame.scale_x
    y = (frame.origin_y + cell_row * frame.stride) / frame.scale_y
    return x, y


def pixel_to_cell_float(frame: MapFrame, x: float, y: float) -> tuple[float, float]:
    col = (x * frame.scale_x - frame.origin_x) / frame.stride
    row = (y * frame.scale_y - frame.origin_y) / frame.stride
    return row, col


def pixel_to_cell(frame: MapFrame, x: float, y: float) -> tuple[int, int]:
    """Nearest cell (row, col) to a pixel position; may lie outside the map."""
    row, col = pixel_to_cell_float(frame, x, y)
    return int(round(row)), int(round(col))


def expand_box(b: Box, ratio: float) -> Box:
    if ratio < 0:
        raise InvalidParameterError(f"expand ratio must be >= 0, got {ratio!r}")
    return Box.from_center(b.cx, b.cy, b.w * (1.0 + ratio), b.h * (1.0 + ratio))


def clip_box(b: Box, width: float, height: float) -> Box:
    """Intersect ``b`` with the image ``[0, width) x [0, height)``."""
    x1, y1 = max(b.x, 0.0), max(b.y, 0.0)
    x2, y2 = min(b.x2, float(width)), min(b.y2, float(height))
    if x2 <= x1 or y2 <= y1:
        raise EmptyRegionError(f"box {b.as_list()} lies outside the {width}x{height} image")
    return Box(x1, y1, x2 - x1, y2 - y1)


def boxes_to_array(boxes: Iterable[Box]) -> np.ndarray:
    return np.array([b.as_list() for b in boxes], dtype=float).reshape(-1, 4)
