"""Saliency maps and saliency-weighted proposal re-scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, EmptyRegionError, InvalidParameterError
from .geometry import Box, ScoredBox

DEFAULT_TH_B = 0.5


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    """Per-pixel pedestrian saliency in [0, 1], stored as a ``(height, width)`` array."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.size == 0:
            raise DimensionError(f"saliency values must be a non-empty 2-D grid, got shape {v.shape}")
        if not np.all((v >= 0.0) & (v <= 1.0)):
            raise InvalidParameterError("saliency values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SaliencyMap):
            return NotImplemented
        return np.array_equal(self.values, other.values)


def pixel_span(lo: float, hi: float, n: int) -> tuple[int, int]:
    """Pixel indices ``[i0, i1)`` whose centers ``i + 0.5`` lie in ``[lo, hi)``, clipped to ``[0, n)``."""
    i0 = math.ceil(lo - 0.5)
    i1 = math.ceil(hi - 0.5)
    return max(i0, 0), min(i1, n)


def box_pixels(b: Box, width: int, height: int) -> tuple[slice, slice]:
    r0, r1 = pixel_span(b.y, b.y2, height)
    c0, c1 = pixel_span(b.x, b.x2, width)
    if r1 <= r0 or c1 <= c0:
        raise EmptyRegionError(f"box {b.as_list()} covers no pixel of the {width}x{height} map")
    return slice(r0, r1), slice(c0, c1)


def mean_saliency(b: Box, smap: SaliencyMap) -> float:
    rows, cols = box_pixels(b, smap.width, smap.height)
    return float(smap.values[rows, cols].mean())


def saliency_weight(b: ScoredBox, smap: SaliencyMap, th_b: float = DEFAULT_TH_B) -> float:
    """Weight applied to a proposal score.

    Confident proposals (``score > th_b``) keep weight 1; the rest are
    weighted by the mean saliency over the pixel centers inside the box.
    """
    if b.score > th_b:
        return 1.0
    return mean_saliency(b.box, smap)


def reweight(b: ScoredBox, smap: SaliencyMap, th_b: float = DEFAULT_TH_B) -> ScoredBox:
    w = saliency_weight(b, smap, th_b)
    if w == 1.0:
        return b
    return ScoredBox(b.box, b.score * w)


def reweight_all(boxes: Sequence[ScoredBox], smap: SaliencyMap, th_b: float = DEFAULT_TH_B) -> list[ScoredBox]:
    return [reweight(b, smap, th_b) for b in boxes]


def saliency_ground_truth(image_w: int, image_h: int, gt: Sequence[Box]) -> SaliencyMap:
    """White rectangles (1.0) on a black background, one per ground-truth box."""
    if image_w <= 0 or image_h <= 0:
        raise InvalidParameterError(f"image dimensions must be positive, got {image_w}x{image_h}")
    grid = np.zeros((int(image_h), int(image_w)))
    for b in gt:
        r0, r1 = pixel_span(b.y, b.y2, image_h)
        c0, c1 = pixel_span(b.x, b.x2, image_w)
        if r1 > r0 and c1 > c0:
            grid[r0:r1, c0:c1] = 1.0
    return SaliencyMap(grid)
