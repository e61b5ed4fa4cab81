"""Synthetic scenes with planted pedestrians and an analytic scorer backend.

Every scene plants pedestrians (full and visible boxes, part boxes),
pole-like distractors, jittered proposals that reproduce the proposal
shift problem, a saliency map, and a backend whose confidence maps are
separable Gaussian bumps centered on the true positions. Because the maps
are closed-form functions of absolute pixel position, shift-and-stitch and
alignment can be checked against direct evaluation.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import GenerationError, InvalidParameterError
from .evaluation import Annotation
from .geometry import Box, expand_box, intersection
from .heatmap import MAP_COLS, MAP_ROWS, STRIDE, ConfidenceMap, FeatureGrid, ScorerOutput, input_frame
from .parts import PART_ORDER, part_boxes
from .saliency import SaliencyMap, pixel_span, saliency_ground_truth

N_WAVES = 6
CAM_SIGMA_FACTORS = (1.0, 1.5)


@dataclass(frozen=True)
class BackendParams:
    bump_sigma: float = 8.0  # pixels
    noise: float = 0.0  # amplitude of the smooth pseudo-noise texture
    root_amplitude: float = 1.0
    part_amplitude: float = 1.0
    cam_weights: tuple = (0.6, 0.4, 1.0)  # bump, wide bump, texture
    seed: int = 0


@dataclass(frozen=True)
class PlantedPedestrian:
    center: tuple[float, float]
    height: float
    parts: dict  # part name -> (cx, cy)


class AnalyticBackend:
    """Deterministic scorer whose maps sample closed-form fields.

    ``field(image_id, detector, x, y)`` is the value a cell centered on
    image pixel ``(x, y)`` receives; ``evaluate`` samples it on the 5 x 3
    grid of the resized, offset window.
    """

    stride = STRIDE
    serial = False

    def __init__(self, planted: dict[str, Sequence[PlantedPedestrian]], params: BackendParams = BackendParams()):
        self.planted = {k: list(v) for k, v in planted.items()}
        self.params = params
        self._waves = {image_id: self._make_waves(image_id) for image_id in self.planted}

    def _make_waves(self, image_id: str) -> np.ndarray:
        rng = np.random.default_rng([self.params.seed, zlib.crc32(image_id.encode())])
        wavelength = rng.uniform(10.0, 40.0, N_WAVES)
        angle = rng.uniform(0.0, 2 * math.pi, N_WAVES)
        phase = rng.uniform(0.0, 2 * math.pi, N_WAVES)
        k = 2 * math.pi / wavelength
        return np.stack([k * np.cos(angle), k * np.sin(angle), phase], axis=1)

    def texture(self, image_id: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        waves = self._waves.get(image_id)
        if waves is None:
            waves = self._make_waves(image_id)
        acc = np.zeros(np.broadcast(x, y).shape)
        for kx, ky, ph in waves:
            acc += np.sin(kx * x + ky * y + ph)
        return acc / len(waves)

    def _bumps(self, centers, amplitude: float, sigma: float, x, y) -> np.ndarray:
        acc = np.zeros(np.broadcast(x, y).shape)
        for cx, cy in centers:
            acc += np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma * sigma))
        return amplitude * acc

    def _centers(self, image_id: str, detector: str):
        peds = self.planted.get(image_id, [])
        if detector == "root":
            return [p.center for p in peds], self.params.root_amplitude
        return [p.parts[detector] for p in peds], self.params.part_amplitude

    def field(self, image_id: str, detector: str, x, y) -> np.ndarray:
        """FCN confidence at image pixels ``(x, y)``."""
        centers, amp = self._centers(image_id, detector)
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        out = self._bumps(centers, amp, self.params.bump_sigma, x, y)
        if self.params.noise:
            out = out + self.params.noise * self.texture(image_id, x, y)
        return out

    def features(self, image_id: str, detector: str, x, y) -> np.ndarray:
        """Feature channels at ``(x, y)``: narrow bump, wide bump, texture."""
        centers, amp = self._centers(image_id, detector)
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        chans = [self._bumps(centers, amp, self.params.bump_sigma * k, x, y) for k in CAM_SIGMA_FACTORS]
        chans.append(self.params.noise * self.texture(image_id, x, y))
        return np.stack(chans, axis=-1)

    def score(self, image_id: str, detector: str, x: float, y: float) -> float:
        """Window score: Gaussian in center distance, relative to pedestrian height."""
        peds = self.planted.get(image_id, [])
        best = 0.0
        for p in peds:
            cx, cy = p.center if detector == "root" else p.parts[detector]
            s = 0.15 * p.height
            best = max(best, math.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * s * s)))
        amp = self.params.root_amplitude if detector == "root" else self.params.part_amplitude
        return amp * best

    def evaluate(self, region: Box, image_id: str, offset=(0.0, 0.0), detector: str = "root") -> ScorerOutput:
        if detector != "root" and detector not in {k.value for k in PART_ORDER}:
            raise InvalidParameterError(f"unknown detector {detector!r}")
        frame = input_frame(region, offset, self.stride)
        cols = (frame.origin_x + np.arange(MAP_COLS) * frame.stride) / frame.scale_x
        rows = (frame.origin_y + np.arange(MAP_ROWS) * frame.stride) / frame.scale_y
        x, y = np.meshgrid(cols, rows)
        fcn = ConfidenceMap(self.field(image_id, detector, x, y), frame)
        feats = FeatureGrid(self.features(image_id, detector, x, y), frame)
        cx = region.cx + offset[0] / frame.scale_x
        cy = region.cy + offset[1] / frame.scale_y
        return ScorerOutput(fcn, feats, np.array(self.params.cam_weights, dtype=float),
                            self.score(image_id, detector, cx, cy))

    def to_dict(self) -> dict:
        return {
            "params": {**asdict(self.params), "cam_weights": list(self.params.cam_weights)},
            "images": {
                image_id: [{"center": list(p.center), "height": p.height,
                            "parts": {k: list(v) for k, v in p.parts.items()}} for p in peds]
                for image_id, peds in self.planted.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyticBackend":
        params = dict(d["params"])
        params["cam_weights"] = tuple(params["cam_weights"])
        planted = {
            image_id: [PlantedPedestrian(tuple(p["center"]), float(p["height"]),
                                         {k: tuple(v) for k, v in p["parts"].items()}) for p in peds]
            for image_id, peds in d["images"].items()
        }
        return cls(planted, BackendParams(**params))


@dataclass(frozen=True)
class SceneParams:
    n_pedestrians: int = 4
    n_distractors: int = 3
    jitter: float = 8.0  # per-axis standard deviation, pixels
    occlusion: float = 0.0  # probability that a pedestrian is heavily occluded
    width: int = 640
    height: int = 480
    seed: int = 0
    noise: float = 0.0
    bump_sigma: float = 8.0
    part_amplitude: float = 1.0
    proposals_per_pedestrian: int = 1
    ped_height: tuple = (60.0, 160.0)
    aspect: float = 0.41
    ped_score: tuple = (0.55, 0.95)
    distractor_score: tuple = (0.2, 0.5)
    distractor_saliency: float = 0.1
    jitter_clip: float = 4.0  # displacement clipped to +-jitter_clip * jitter per axis
    max_retries: int = 500

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidParameterError(f"image size must be positive, got {self.width}x{self.height}")
        if self.jitter < 0:
            raise InvalidParameterError(f"jitter must be >= 0, got {self.jitter}")
        if self.n_pedestrians < 0 or self.n_distractors < 0 or self.proposals_per_pedestrian < 1:
            raise InvalidParameterError("counts must be non-negative (proposals per pedestrian >= 1)")
        if not (0 <= self.occlusion <= 1):
            raise InvalidParameterError(f"occlusion must be in [0, 1], got {self.occlusion}")
        if not (0 <= self.distractor_saliency <= 1):
            raise InvalidParameterError("distractor_saliency must be in [0, 1]")


@dataclass(frozen=True)
class Proposal:
    box: Box
    score: float
    truth: Optional[int]  # index into the scene's pedestrians, None for distractors
    source: str  # "pedestrian" or "distractor"


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    image_id: str
    params: SceneParams
    pedestrians: list  # Annotation
    parts: list  # dict PartKind -> Box, per pedestrian
    distractors: list  # Box
    proposals: list  # Proposal
    saliency: SaliencyMap
    planted: list  # PlantedPedestrian
    backend_params: BackendParams

    @property
    def backend(self) -> AnalyticBackend:
        return AnalyticBackend({self.image_id: self.planted}, self.backend_params)

    def __eq__(self, other):
        if not isinstance(other, SyntheticScene):
            return NotImplemented
        return (self.image_id == other.image_id and self.params == other.params
                and self.pedestrians == other.pedestrians and self.parts == other.parts
                and self.distractors == other.distractors and self.proposals == other.proposals
                and self.saliency == other.saliency and self.planted == other.planted
                and self.backend_params == other.backend_params)


def backend_params(p: SceneParams, seed: Optional[int] = None) -> BackendParams:
    return BackendParams(bump_sigma=p.bump_sigma, noise=p.noise, part_amplitude=p.part_amplitude,
                         seed=p.seed if seed is None else seed)


def _free(b: Box, taken: list[Box], margin: float) -> bool:
    grown = expand_box(b, margin)
    return all(intersection(grown, expand_box(t, margin)) == 0.0 for t in taken)


def _place(rng: np.random.Generator, w: float, h: float, p: SceneParams, taken: list[Box]) -> Box:
    if w >= p.width or h >= p.height:
        raise GenerationError(f"a {w:.1f}x{h:.1f} object does not fit a {p.width}x{p.height} image")
    for _ in range(p.max_retries):
        b = Box(float(rng.uniform(0, p.width - w)), float(rng.uniform(0, p.height - h)), w, h)
        if _free(b, taken, 0.3):
            return b
    # crowded image: fall back to a shuffled scan of a 4 px grid
    xs = np.arange(0.0, p.width - w, 4.0)
    ys = np.arange(0.0, p.height - h, 4.0)
    cells = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    for x, y in cells[rng.permutation(len(cells))]:
        b = Box(float(x), float(y), w, h)
        if _free(b, taken, 0.3):
            return b
    raise GenerationError(f"no free position for a {w:.1f}x{h:.1f} object after {p.max_retries} random attempts "
                          f"and a full grid scan")


SCENE_RESTARTS = 8


def generate_scene(params: SceneParams, image_id: str = "img0000",
                   backend_seed: Optional[int] = None) -> SyntheticScene:
    """Plant a scene; a jammed layout is redrawn from a derived seed a bounded number of times."""
    for attempt in range(SCENE_RESTARTS):
        rng = np.random.default_rng(params.seed if attempt == 0 else [params.seed, attempt])
        try:
            return _draw_scene(rng, params, image_id, backend_seed)
        except GenerationError as exc:
            last = exc
    raise GenerationError(f"{last} (scene redrawn {SCENE_RESTARTS} times)")


def _draw_scene(rng: np.random.Generator, params: SceneParams, image_id: str,
                backend_seed: Optional[int]) -> SyntheticScene:
    taken: list[Box] = []
    peds, parts, planted = [], [], []
    for _ in range(params.n_pedestrians):
        h = float(rng.uniform(*params.ped_height))
        full = _place(rng, params.aspect * h, h, params, taken)
        taken.append(full)
        occluded = rng.uniform() < params.occlusion
        vis_frac = float(rng.uniform(0.3, 0.6)) if occluded else 1.0
        vis = full if not occluded else Box(full.x, full.y, full.w, full.h * vis_frac)
        ann = Annotation(image_id, full, vis)
        pboxes = part_boxes(vis)
        peds.append(ann)
        parts.append(pboxes)
        planted.append(PlantedPedestrian(full.center, full.h, {k.value: b.center for k, b in pboxes.items()}))

    distractors = []
    for _ in range(params.n_distractors):
        h = float(rng.uniform(60.0, 200.0))
        w = float(rng.uniform(8.0, 20.0))
        # pole-like, padded to a pedestrian footprint so proposals on it do not touch pedestrians
        footprint = _place(rng, max(w, params.aspect * h), h, params, taken)
        taken.append(footprint)
        distractors.append(Box(footprint.cx - w / 2.0, footprint.y, w, h))

    proposals = []
    lim = params.jitter_clip * params.jitter
    for k, ann in enumerate(peds):
        for _ in range(params.proposals_per_pedestrian):
            d = rng.normal(0.0, params.jitter, 2) if params.jitter > 0 else np.zeros(2)
            dx, dy = (float(v) for v in np.clip(d, -lim, lim))
            score = float(rng.uniform(*params.ped_score))
            proposals.append(Proposal(ann.bb_full.translate(dx, dy), score, k, "pedestrian"))
    for b in distractors:
        score = float(rng.uniform(*params.distractor_score))
        proposals.append(Proposal(Box.from_center(b.cx, b.cy, params.aspect * b.h, b.h), score, None, "distractor"))

    smap = saliency_ground_truth(params.width, params.height, [a.bb_full for a in peds]).values.copy()
    if params.distractor_saliency > 0:
        for b in distractors:
            r0, r1 = pixel_span(b.y, b.y2, params.height)
            c0, c1 = pixel_span(b.x, b.x2, params.width)
            region = smap[r0:r1, c0:c1]
            region[...] = np.maximum(region, params.distractor_saliency)
    return SyntheticScene(image_id, params, peds, parts, distractors, proposals, SaliencyMap(smap), planted,
                          backend_params(params, backend_seed))


def scene_seed(seed: int, index: int) -> int:
    """Independent per-image seed derived from the run seed."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def generate_scenes(params: SceneParams, n_images: int) -> list[SyntheticScene]:
    return [generate_scene(replace(params, seed=scene_seed(params.seed, i)), f"img{i:04d}", params.seed)
            for i in range(n_images)]


def combined_backend(scenes: Sequence[SyntheticScene]) -> AnalyticBackend:
    if not scenes:
        return AnalyticBackend({}, BackendParams())
    return AnalyticBackend({s.image_id: s.planted for s in scenes}, scenes[0].backend_params)
