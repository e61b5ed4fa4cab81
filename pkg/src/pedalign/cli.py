"""Command-line entry point: ``pedalign {gen,detect,align,eval,curve-export}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import pipeline
from .config import RunConfig
from .data import DirectoryBackend, load_dataset, load_detections, save_detections, write_text_atomic
from .errors import (InvalidParameterError, MissingInputError, PedAlignError, UndefinedMetricError)
from .evaluation import format_curve

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VALIDATION = 2
EXIT_MISSING = 3
EXIT_UNDEFINED = 4


def _global_flags() -> argparse.ArgumentParser:
    # SUPPRESS lets the flags appear before or after the subcommand without
    # the subparser default clobbering a value given at the top level
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON run-configuration file")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker threads for per-image work")
    p.add_argument("--no-saliency", action="store_true", default=argparse.SUPPRESS,
                   help="skip saliency re-weighting in detect")
    p.add_argument("--clamp-delta", action="store_true", default=argparse.SUPPRESS,
                   help="clamp the alignment confidence ratio to at most 1")
    p.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE",
                   help="override any run-configuration parameter (repeatable)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="pedalign", parents=[common],
                                     description="Pedestrian detection post-processing pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="write a synthetic dataset")
    g.add_argument("out_dir")
    g.add_argument("--n-images", type=int)
    g.add_argument("--n-pedestrians", type=int)
    g.add_argument("--n-distractors", type=int)
    g.add_argument("--jitter", type=float)
    g.add_argument("--occlusion", type=float)

    d = sub.add_parser("detect", parents=[common], help="saliency re-scoring + NMS on proposals")
    d.add_argument("dataset")
    d.add_argument("--proposals", help="proposals file (default DATASET/proposals.jsonl)")
    d.add_argument("-o", "--output", help="detections file (default DATASET/detections.jsonl)")

    a = sub.add_parser("align", parents=[common], help="box alignment and part-score merging")
    a.add_argument("dataset")
    a.add_argument("-d", "--detections", help="input detections (default DATASET/detections.jsonl)")
    a.add_argument("-o", "--output", help="aligned detections (default DATASET/aligned.jsonl)")
    a.add_argument("--backend", help="directory of stored maps to replay instead of DATASET/scene.json")
    a.add_argument("--post-nms", action="store_true", default=None,
                   help="suppress duplicate aligned boxes with a second NMS pass")

    for name, help_ in (("eval", "log-average miss rate"), ("curve-export", "write the miss-rate/FPPI table")):
        e = sub.add_parser(name, parents=[common], help=help_)
        e.add_argument("dataset")
        e.add_argument("-d", "--detections", help="detections to score (default DATASET/detections.jsonl)")
        e.add_argument("-o", "--output", required=(name == "curve-export"), help="curve table path")
        e.add_argument("--summary", help="also write the summary record as JSON")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides: dict = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise InvalidParameterError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for flag, key in (("seed", "seed"), ("jobs", "jobs"), ("n_images", "n_images"),
                      ("n_pedestrians", "n_pedestrians"), ("n_distractors", "n_distractors"),
                      ("jitter", "jitter"), ("occlusion", "occlusion")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "no_saliency", False):
        overrides["use_saliency"] = False
    if getattr(args, "post_nms", None):
        overrides["post_nms"] = True
    if getattr(args, "clamp_delta", False):
        overrides["clamp_delta"] = True
    return RunConfig.load(getattr(args, "config", None), overrides)


def _default(path: Optional[str], root: str, name: str) -> Path:
    return Path(path) if path else Path(root) / name


def _cmd_gen(args, config: RunConfig) -> int:
    ds = pipeline.generate_dataset(config, args.out_dir)
    print(json.dumps({"images": len(ds.images), "annotations": len(ds.annotations), "out_dir": args.out_dir}))
    return EXIT_OK


def _cmd_detect(args, config: RunConfig) -> int:
    ds = load_dataset(args.dataset)
    props = load_detections(_default(args.proposals, args.dataset, pipeline.PROPOSALS_FILE))
    dets = pipeline.run_detect(ds, props, config)
    out = _default(args.output, args.dataset, "detections.jsonl")
    save_detections(dets, out)
    print(json.dumps({"detections": len(dets), "output": str(out)}))
    return EXIT_OK


def _cmd_align(args, config: RunConfig) -> int:
    load_dataset(args.dataset)
    dets = load_detections(_default(args.detections, args.dataset, "detections.jsonl"))
    backend = DirectoryBackend(args.backend) if args.backend else pipeline.load_backend(args.dataset)
    aligned = pipeline.run_align(backend, dets, config)
    out = _default(args.output, args.dataset, "aligned.jsonl")
    save_detections(aligned, out)
    print(json.dumps({"detections": len(aligned), "output": str(out)}))
    return EXIT_OK


def _cmd_eval(args, config: RunConfig) -> int:
    ds = load_dataset(args.dataset)
    dets = load_detections(_default(args.detections, args.dataset, "detections.jsonl"))
    c = pipeline.run_eval(ds, dets, config)
    record = pipeline.summary(c, ds)
    if args.output:
        write_text_atomic(args.output, format_curve(c))
    if args.summary:
        write_text_atomic(args.summary, json.dumps(record) + "\n")
    print(json.dumps(record))
    return EXIT_OK


COMMANDS = {"gen": _cmd_gen, "detect": _cmd_detect, "align": _cmd_align,
            "eval": _cmd_eval, "curve-export": _cmd_eval}


def exit_code(exc: Exception) -> int:
    if isinstance(exc, MissingInputError):
        return EXIT_MISSING
    if isinstance(exc, UndefinedMetricError):
        return EXIT_UNDEFINED
    if isinstance(exc, PedAlignError):
        return EXIT_VALIDATION
    return EXIT_ERROR


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        return COMMANDS[args.command](args, config)
    except (PedAlignError, OSError) as exc:
        kind = getattr(exc, "kind", "io")
        message = " ".join(str(exc).split())
        print(f"pedalign: error[{kind}]: {message}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
