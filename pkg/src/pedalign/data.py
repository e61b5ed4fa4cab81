"""On-disk formats: JSON-lines records, headered grid files, replay backends.

Dataset layout::

    root/
      images.jsonl        {"image_id", "width", "height"}
      annotations.jsonl   {"image_id", "bb_full": [x, y, w, h], "bb_vis": [...], "ignore"}
      proposals.jsonl     {"image_id", "box": [...], "score"}   (optional)
      saliency/<image_id>.grid                                   (optional)
      scene.json          analytic backend description           (synthetic only)

Unknown fields in any record are carried through load/save untouched.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .errors import MissingInputError, ParseError, ValidationError
from .evaluation import Annotation
from .geometry import Box, MapFrame, ScoredBox
from .heatmap import ConfidenceMap, FeatureGrid, ScorerBackend, ScorerOutput
from .saliency import SaliencyMap

GRID_MAGIC = "PEDGRID 1"


def write_text_atomic(path: Union[str, Path], text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_jsonl(path: Union[str, Path]) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"missing file {path}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise ParseError(f"{path}:{lineno}: record is not an object")
            records.append(rec)
    return records


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=False) + "\n" for r in records)


def _box(value, where: str) -> Box:
    try:
        x, y, w, h = (float(v) for v in value)
        return Box(x, y, w, h)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: bad box {value!r} ({exc})") from None


def _take(rec: dict, key: str, where: str):
    if key not in rec:
        raise ParseError(f"{where}: missing field {key!r}")
    return rec[key]


@dataclass(frozen=True)
class ImageInfo:
    image_id: str
    width: int
    height: int
    extra: dict = field(default_factory=dict, hash=False)


@dataclass
class Dataset:
    images: list = field(default_factory=list)
    annotations: list = field(default_factory=list)
    root: Optional[Path] = field(default=None, compare=False)

    def image(self, image_id: str) -> ImageInfo:
        for im in self.images:
            if im.image_id == image_id:
                return im
        raise MissingInputError(f"unknown image_id {image_id!r}")

    @property
    def image_ids(self) -> list[str]:
        return [im.image_id for im in self.images]

    def annotations_by_image(self) -> dict[str, list[Annotation]]:
        out: dict[str, list[Annotation]] = {im.image_id: [] for im in self.images}
        for a in self.annotations:
            out.setdefault(a.image_id, []).append(a)
        return out

    def validate(self) -> None:
        offenders = []
        sizes = {}
        for im in self.images:
            if im.image_id in sizes:
                offenders.append(f"duplicate image_id {im.image_id!r}")
            if not (im.width > 0 and im.height > 0):
                offenders.append(f"image {im.image_id!r} has non-positive size")
            sizes[im.image_id] = (im.width, im.height)
        for k, a in enumerate(self.annotations):
            tag = f"annotation {k} ({a.image_id!r})"
            if a.image_id not in sizes:
                offenders.append(f"{tag} references unknown image")
                continue
            if not a.is_consistent():
                offenders.append(f"{tag} bb_vis lies outside bb_full")
            w, h = sizes[a.image_id]
            for name, b in (("bb_full", a.bb_full), ("bb_vis", a.bb_vis)):
                if b.x2 <= 0 or b.y2 <= 0 or b.x >= w or b.y >= h:
                    offenders.append(f"{tag} {name} does not intersect the image")
        if offenders:
            raise ValidationError("invalid dataset", offenders)


def image_to_record(im: ImageInfo) -> dict:
    return {"image_id": im.image_id, "width": im.width, "height": im.height, **im.extra}


def image_from_record(rec: dict, where: str) -> ImageInfo:
    extra = {k: v for k, v in rec.items() if k not in ("image_id", "width", "height")}
    return ImageInfo(str(_take(rec, "image_id", where)), int(_take(rec, "width", where)),
                     int(_take(rec, "height", where)), extra)


def annotation_to_record(a: Annotation) -> dict:
    rec = {"image_id": a.image_id, "bb_full": a.bb_full.as_list()}
    if a.bb_vis != a.bb_full:
        rec["bb_vis"] = a.bb_vis.as_list()
    rec["ignore"] = a.ignore
    rec.update(a.extra)
    return rec


def annotation_from_record(rec: dict, where: str) -> Annotation:
    extra = {k: v for k, v in rec.items() if k not in ("image_id", "bb_full", "bb_vis", "ignore")}
    bb_vis = _box(rec["bb_vis"], where) if rec.get("bb_vis") is not None else None
    return Annotation(str(_take(rec, "image_id", where)), _box(_take(rec, "bb_full", where), where),
                      bb_vis, bool(rec.get("ignore", False)), extra)


def load_dataset(path: Union[str, Path], validate: bool = True) -> Dataset:
    root = Path(path)
    images_path = root / "images.jsonl"
    if not images_path.exists():
        raise MissingInputError(f"no images.jsonl in {root}")
    images = _parse_lines(images_path, image_from_record)
    ann_path = root / "annotations.jsonl"
    anns = _parse_lines(ann_path, annotation_from_record) if ann_path.exists() else []
    ds = Dataset(images, anns, root)
    if validate:
        ds.validate()
    return ds


def _parse_lines(path: Path, parse) -> list:
    """Parse a JSON-lines file, reporting the physical line of any bad record."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{where}: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise ParseError(f"{where}: record is not an object")
            try:
                out.append(parse(rec, where))
            except ParseError:
                raise
            except (ValueError, TypeError) as exc:
                raise ParseError(f"{where}: {exc}") from None
    return out


def save_dataset(ds: Dataset, path: Union[str, Path]) -> None:
    root = Path(path)
    write_text_atomic(root / "images.jsonl", dumps_jsonl(image_to_record(im) for im in ds.images))
    write_text_atomic(root / "annotations.jsonl", dumps_jsonl(annotation_to_record(a) for a in ds.annotations))


# -- detections ---------------------------------------------------------------

@dataclass(frozen=True)
class Detection:
    image_id: str
    box: Box
    score: float
    extra: dict = field(default_factory=dict, hash=False)

    @property
    def scored(self) -> ScoredBox:
        return ScoredBox(self.box, self.score)


def detection_to_record(d: Detection) -> dict:
    return {"image_id": d.image_id, "box": d.box.as_list(), "score": d.score, **d.extra}


def detection_from_record(rec: dict, where: str) -> Detection:
    extra = {k: v for k, v in rec.items() if k not in ("image_id", "box", "score")}
    return Detection(str(_take(rec, "image_id", where)), _box(_take(rec, "box", where), where),
                     float(_take(rec, "score", where)), extra)


def load_detections(path: Union[str, Path]) -> list[Detection]:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"missing detections file {path}")
    return _parse_lines(path, detection_from_record)


def save_detections(dets: Iterable[Detection], path: Union[str, Path]) -> None:
    write_text_atomic(path, dumps_jsonl(detection_to_record(d) for d in dets))


def group_by_image(dets: Iterable[Detection]) -> dict[str, list[Detection]]:
    out: dict[str, list[Detection]] = {}
    for d in dets:
        out.setdefault(d.image_id, []).append(d)
    return out


# -- grids --------------------------------------------------------------------

Grid = Union[SaliencyMap, ConfidenceMap, FeatureGrid]


def dumps_grid(grid: Grid) -> str:
    if isinstance(grid, SaliencyMap):
        kind, frame, values = "saliency", MapFrame(0.5, 0.5, 1.0), grid.values[:, :, None]
    elif isinstance(grid, ConfidenceMap):
        kind, frame, values = "confidence", grid.frame, grid.values[:, :, None]
    elif isinstance(grid, FeatureGrid):
        kind, frame, values = "features", grid.frame, grid.values
    else:
        raise TypeError(f"cannot serialize {type(grid).__name__}")
    rows, cols, channels = values.shape
    lines = [
        GRID_MAGIC,
        f"kind {kind}",
        f"rows {rows}",
        f"cols {cols}",
        f"channels {channels}",
        f"stride {frame.stride!r}",
        f"origin {frame.origin_x!r} {frame.origin_y!r}",
        f"scale {frame.scale_x!r} {frame.scale_y!r}",
        "values",
    ]
    for r in range(rows):
        lines.append(" ".join(repr(float(v)) for v in values[r].ravel()))
    lines.append("end")
    return "\n".join(lines) + "\n"


def loads_grid(text: str, where: str = "<grid>") -> Grid:
    lines = text.split("\n")

    def field_line(i: int, name: str) -> list[str]:
        if i >= len(lines):
            raise ParseError(f"{where}: truncated header, expected {name!r}")
        parts = lines[i].split()
        if not parts or parts[0] != name:
            raise ParseError(f"{where}:{i + 1}: expected {name!r}, got {lines[i]!r}")
        return parts[1:]

    if not lines or lines[0].strip() != GRID_MAGIC:
        raise ParseError(f"{where}: not a grid file (bad magic)")
    try:
        kind = field_line(1, "kind")[0]
        rows = int(field_line(2, "rows")[0])
        cols = int(field_line(3, "cols")[0])
        channels = int(field_line(4, "channels")[0])
        stride = float(field_line(5, "stride")[0])
        ox, oy = (float(v) for v in field_line(6, "origin"))
        sx, sy = (float(v) for v in field_line(7, "scale"))
        field_line(8, "values")
    except (IndexError, ValueError) as exc:
        raise ParseError(f"{where}: bad header ({exc})") from None
    if rows < 1 or cols < 1 or channels < 1:
        raise ParseError(f"{where}: bad shape {rows}x{cols}x{channels}")
    body = lines[9:9 + rows]
    if len(body) != rows or len(lines) < 10 + rows or lines[9 + rows].strip() != "end":
        raise ParseError(f"{where}: truncated grid, expected {rows} rows and an end marker")
    try:
        data = [[float(v) for v in line.split()] for line in body]
    except ValueError as exc:
        raise ParseError(f"{where}: bad value ({exc})") from None
    for r, row in enumerate(data):
        if len(row) != cols * channels:
            raise ParseError(f"{where}: row {r} has {len(row)} values, expected {cols * channels}")
    values = np.array(data, dtype=float).reshape(rows, cols, channels)
    try:
        frame = MapFrame(ox, oy, stride, sx, sy)
        if kind == "saliency":
            return SaliencyMap(values[:, :, 0])
        if kind == "confidence":
            if channels != 1:
                raise ParseError(f"{where}: confidence grid with {channels} channels")
            return ConfidenceMap(values[:, :, 0], frame)
        if kind == "features":
            return FeatureGrid(values, frame)
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from None
    raise ParseError(f"{where}: unknown grid kind {kind!r}")


def save_grid(grid: Grid, path: Union[str, Path]) -> None:
    write_text_atomic(path, dumps_grid(grid))


def load_grid(path: Union[str, Path]) -> Grid:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"missing grid file {path}")
    return loads_grid(path.read_text(encoding="utf-8"), str(path))


def saliency_path(root: Union[str, Path], image_id: str) -> Path:
    return Path(root) / "saliency" / f"{image_id}.grid"


def load_saliency(root: Union[str, Path], image_id: str) -> SaliencyMap:
    path = saliency_path(root, image_id)
    if not path.exists():
        raise MissingInputError(f"no saliency map for image_id {image_id!r} ({path})")
    grid = load_grid(path)
    if not isinstance(grid, SaliencyMap):
        raise ParseError(f"{path}: expected a saliency grid")
    return grid


# -- replayable backend -------------------------------------------------------

def region_key(region: Box) -> str:
    text = json.dumps([region.x, region.y, region.w, region.h])
    return hashlib.sha1(text.encode()).hexdigest()[:16]


def _eval_key(image_id: str, region: Box, offset, detector: str) -> tuple:
    return (image_id, region_key(region), float(offset[0]), float(offset[1]), detector)


class RecordingBackend:
    """Wraps a backend and stores every evaluation for later replay."""

    def __init__(self, inner: ScorerBackend, directory: Union[str, Path]):
        self.inner = inner
        self.directory = Path(directory)
        self.stride = inner.stride
        self.serial = getattr(inner, "serial", True)
        self._lock = threading.Lock()
        self._manifest: dict[tuple, dict] = {}

    def evaluate(self, region, image_id, offset=(0.0, 0.0), detector="root"):
        out = self.inner.evaluate(region, image_id, offset, detector)
        key = _eval_key(image_id, region, offset, detector)
        stem = f"{image_id}_{key[1]}_{detector}_{key[2]:g}_{key[3]:g}"
        rec = {"image_id": image_id, "region": region.as_list(), "offset": [key[2], key[3]],
               "detector": detector, "score": out.score,
               "cam_weights": [float(w) for w in out.cam_weights],
               "fcn": f"{stem}.fcn.grid", "features": f"{stem}.feat.grid"}
        save_grid(out.fcn, self.directory / rec["fcn"])
        save_grid(out.features, self.directory / rec["features"])
        with self._lock:
            self._manifest[key] = rec
        return out

    def flush(self) -> None:
        with self._lock:
            recs = [self._manifest[k] for k in sorted(self._manifest)]
        write_text_atomic(self.directory / "manifest.jsonl", dumps_jsonl(recs))


class DirectoryBackend:
    """Replays maps stored by :class:`RecordingBackend`."""

    serial = False

    def __init__(self, directory: Union[str, Path], stride: int = 32):
        self.directory = Path(directory)
        self.stride = stride
        self._index = {}
        for rec in read_jsonl(self.directory / "manifest.jsonl"):
            region = Box(*rec["region"])
            key = _eval_key(rec["image_id"], region, rec["offset"], rec["detector"])
            self._index[key] = rec

    def evaluate(self, region, image_id, offset=(0.0, 0.0), detector="root"):
        rec = self._index.get(_eval_key(image_id, region, offset, detector))
        if rec is None:
            raise MissingInputError(
                f"no stored {detector} map for image_id {image_id!r} region {region.as_list()} offset {tuple(offset)}")
        fcn = load_grid(self.directory / rec["fcn"])
        feats = load_grid(self.directory / rec["features"])
        return ScorerOutput(fcn, feats, np.array(rec["cam_weights"], dtype=float), float(rec["score"]))
