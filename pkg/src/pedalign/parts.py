"""Head/torso/legs part boxes, spatial penalty and root+part score fusion."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .alignment import AlignParams, locate, stitch_region
from .errors import InvalidParameterError
from .geometry import Box, expand_box
from .heatmap import ScorerBackend


class PartKind(str, enum.Enum):
    HEAD = "head"
    TORSO = "torso"
    LEGS = "legs"


PART_ORDER = (PartKind.HEAD, PartKind.TORSO, PartKind.LEGS)


@dataclass(frozen=True)
class PartDetection:
    kind: PartKind
    score: float
    position: tuple[float, float]

    def __post_init__(self):
        if not (math.isfinite(self.score) and all(math.isfinite(v) for v in self.position)):
            raise InvalidParameterError(f"non-finite part detection {self}")


THIRD = Fraction(1, 3)


def parse_weight(v):
    # exact rationals stay exact ("1/3" or Fraction); anything else is a float
    if isinstance(v, (Fraction, int)) and not isinstance(v, bool):
        return Fraction(v)
    if isinstance(v, str):
        try:
            return Fraction(v.strip())
        except (ValueError, ZeroDivisionError):
            raise InvalidParameterError(f"bad part weight {v!r}") from None
    return float(v)


@dataclass(frozen=True)
class MergeParams:
    # exact thirds so the fused score is correctly rounded from exact weights
    w: tuple = (THIRD, THIRD, THIRD)
    a: float = -0.1
    b: float = 0.0
    # divide displacements by proposal width/height before penalizing
    normalize: bool = False

    def __post_init__(self):
        if len(self.w) != 3:
            raise InvalidParameterError(f"expected three part weights, got {self.w}")
        object.__setattr__(self, "w", tuple(parse_weight(v) for v in self.w))
        if not all(math.isfinite(v) for v in tuple(self.w) + (self.a, self.b)):
            raise InvalidParameterError(f"merge weights must be finite, got {self.w}")
        check_weight_sum(self.w)


def check_weight_sum(w) -> None:
    total = sum(Fraction(v) for v in w)
    if abs(total - 1) > 1e-9:
        raise InvalidParameterError(f"part weights must sum to 1, got sum {float(total)!r}")


def part_boxes(bb_vis: Box) -> dict[PartKind, Box]:
    """Uniform horizontal thirds of the visible box."""
    third = bb_vis.h / 3.0
    return {
        PartKind.HEAD: Box(bb_vis.x, bb_vis.y, bb_vis.w, third),
        PartKind.TORSO: Box(bb_vis.x, bb_vis.y + third, bb_vis.w, third),
        PartKind.LEGS: Box(bb_vis.x, bb_vis.y + 2 * third, bb_vis.w, bb_vis.h - 2 * third),
    }


def penalty(part_pos: tuple[float, float], anchor: tuple[float, float], a: float, b: float) -> float:
    """``a*(|dx| + |dy|) + b*(|dx|^2 - |dy|^2)``, evaluated as written (note the minus)."""
    dx = abs(part_pos[0] - anchor[0])
    dy = abs(part_pos[1] - anchor[1])
    return a * (dx + dy) + b * (dx * dx - dy * dy)


def merge(score_root: float, parts: Sequence[PartDetection], anchor: tuple[float, float],
          params: MergeParams = MergeParams(), scale: tuple[float, float] = (1.0, 1.0),
          references: Optional[Sequence[tuple[float, float]]] = None) -> float:
    """``score_root + sum_i w_i * (score_i + P_i)``, evaluated exactly and rounded once.

    ``scale`` divides the displacements when ``params.normalize`` is set
    (pass the proposal width and height). ``references`` replaces the anchor
    with one reference point per part when penalizing.
    """
    refs = list(references) if references is not None else [anchor] * len(parts)
    if len(refs) != len(parts):
        raise InvalidParameterError(f"{len(refs)} reference points for {len(parts)} parts")
    if len(parts) != 3:
        raise InvalidParameterError(f"expected 3 part detections, got {len(parts)}")
    check_weight_sum(params.w)
    sx, sy = scale if params.normalize else (1.0, 1.0)
    # accumulate exactly, round once
    total = Fraction(score_root)
    for w_i, part, ref in zip(params.w, parts, refs):
        pos = (part.position[0] / sx, part.position[1] / sy)
        anc = (ref[0] / sx, ref[1] / sy)
        total += Fraction(w_i) * (Fraction(part.score) + Fraction(penalty(pos, anc, params.a, params.b)))
    return float(total)


def detect_parts(backend: ScorerBackend, aligned_box: Box, image_id: str,
                 params: AlignParams = AlignParams(), max_workers: int = 1) -> list[PartDetection]:
    """Run each part detector on the anchor-centered enlarged region.

    The part position is the best part-sized window of the stitched part map
    and the part score is that window's mean value.
    """
    region = expand_box(aligned_box, params.expand_ratio)
    detections = []
    for kind, pbox in zip(PART_ORDER, part_boxes(aligned_box).values()):
        stitched = stitch_region(backend, region, image_id, params, kind.value, max_workers)
        pos = locate(stitched.fcn, pbox.w, pbox.h, None).position
        detections.append(PartDetection(kind, pos.mean_value, (pos.x_p, pos.y_p)))
    return detections
