"""Run configuration: every pipeline parameter in one place.

Precedence is built-in defaults < JSON config file < explicit overrides.
"""

from __future__ import annotations

import dataclasses
import json
from fractions import Fraction
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from .alignment import AlignParams
from .errors import InvalidParameterError, MissingInputError, ParseError
from .parts import THIRD, MergeParams, parse_weight
from .synthetic import SceneParams


@dataclass(frozen=True)
class RunConfig:
    # saliency re-scoring and NMS
    th_b: float = 0.5
    nms_iou: float = 0.5
    use_saliency: bool = True
    # alignment
    expand: float = 0.25
    f: int = 4
    L: float = 0.6
    clamp_delta: bool = False
    upsample_dims: Optional[tuple] = None
    # part merging
    w: tuple = (THIRD, THIRD, THIRD)
    a: float = -0.1
    b: float = 0.0
    normalize_penalty: bool = False
    # "anchor": displacement from the root anchor, as written;
    # "part": displacement from each part's nominal center in the aligned box
    penalty_reference: str = "anchor"
    # second NMS pass on aligned boxes (duplicates converge during alignment)
    post_nms: bool = False
    # evaluation
    min_height: float = 50.0
    min_visibility: float = 0.65
    eval_iou: float = 0.5
    # synthetic data
    seed: int = 0
    n_images: int = 10
    n_pedestrians: int = 4
    n_distractors: int = 3
    proposals_per_pedestrian: int = 3
    jitter: float = 8.0
    occlusion: float = 0.1
    width: int = 640
    height: int = 480
    noise: float = 0.0
    bump_sigma: float = 8.0
    # execution
    jobs: int = 1

    def __post_init__(self):
        if not (0 < self.nms_iou <= 1):
            raise InvalidParameterError(f"nms_iou must be in (0, 1], got {self.nms_iou}")
        if not (0 < self.eval_iou < 1):
            raise InvalidParameterError(f"eval_iou must be in (0, 1), got {self.eval_iou}")
        if not (0 <= self.min_visibility <= 1) or self.min_height < 0:
            raise InvalidParameterError("min_height must be >= 0 and min_visibility in [0, 1]")
        if self.n_images < 0 or self.jobs < 1:
            raise InvalidParameterError("n_images must be >= 0 and jobs >= 1")
        if self.penalty_reference not in ("anchor", "part"):
            raise InvalidParameterError(f"penalty_reference must be 'anchor' or 'part', got {self.penalty_reference!r}")
        if self.f < 1 or 32 % self.f:
            raise InvalidParameterError(f"f must divide the stride 32, got {self.f}")
        # component params validate their own domains
        self.align_params()
        self.merge_params()
        self.scene_params()

    def align_params(self) -> AlignParams:
        dims = tuple(self.upsample_dims) if self.upsample_dims else None
        return AlignParams(self.expand, self.f, self.L, self.clamp_delta, dims)

    def merge_params(self) -> MergeParams:
        return MergeParams(tuple(self.w), self.a, self.b, self.normalize_penalty)

    def scene_params(self) -> SceneParams:
        return SceneParams(
            n_pedestrians=self.n_pedestrians, n_distractors=self.n_distractors, jitter=self.jitter,
            occlusion=self.occlusion, width=self.width, height=self.height, seed=self.seed,
            noise=self.noise, bump_sigma=self.bump_sigma,
            proposals_per_pedestrian=self.proposals_per_pedestrian)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["w"] = [str(v) if isinstance(v, Fraction) else v for v in self.w]
        if self.upsample_dims is not None:
            d["upsample_dims"] = list(self.upsample_dims)
        return d

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **coerce(changes))

    @classmethod
    def load(cls, path: Union[str, Path, None] = None, overrides: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        values: dict = {}
        if path is not None:
            p = Path(path)
            if not p.exists():
                raise MissingInputError(f"missing config file {p}")
            try:
                values.update(json.loads(p.read_text(encoding="utf-8")))
            except json.JSONDecodeError as exc:
                raise ParseError(f"{p}:{exc.lineno}: {exc.msg}") from None
        values.update(overrides or {})
        return cls(**coerce(values))


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(values: Mapping[str, Any]) -> dict:
    """Check keys and convert strings/lists from files or the command line."""
    out = {}
    for key, raw in values.items():
        if key not in _FIELD_TYPES:
            raise InvalidParameterError(f"unknown config key {key!r}")
        default = getattr(RunConfig, key)
        try:
            out[key] = _convert(raw, default, key)
        except (TypeError, ValueError) as exc:
            raise InvalidParameterError(f"bad value for {key}: {raw!r} ({exc})") from None
    return out


def _convert(raw, default, key):
    if isinstance(raw, str) and not isinstance(default, str):
        if key == "w":
            raw = raw.split(",")
        elif key == "upsample_dims":
            raw = [float(v) for v in raw.split(",")] if raw.lower() not in ("", "none") else None
        elif isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError("expected a boolean")
            raw = low in ("true", "1", "yes")
        else:
            raw = json.loads(raw)
    if key == "w":
        return tuple(parse_weight(v) for v in raw)
    if key == "upsample_dims":
        return None if raw is None else tuple(int(v) for v in raw)
    if isinstance(default, bool):
        if not isinstance(raw, bool):
            raise TypeError("expected a boolean")
        return raw
    if isinstance(default, int):
        if isinstance(raw, float) and not raw.is_integer():
            raise ValueError("expected an integer")
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw
