"""Command-line entry point: ``fadekit {detect,evaluate,stats,mask,bench,synth}``.

Exit codes: 0 success, 2 configuration or schema error, 3 I/O error,
4 split check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
import time
from pathlib import Path
from typing import Sequence

from . import __version__
from .background import gmm_apply, gmm_new
from .boxes import Detection
from .config import Config, describe_keys
from .errors import AnnotationError, ConfigError, FrameFormatError, SynthSpecError
from .evaluation import VideoMeta, area_stats, check_split, evaluate, load_annotations, load_metadata
from .events import Incident
from .frame_io import list_frame_files, open_sequence, write_image
from .pipeline import STAGES, gmm_params, prepare_frame, run_many, validate_config
from .synth import SynthSpec, falling_spec, horizontal_spec, synth_generate, write_corpus

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SPLIT = 4
BENCH_TARGET_FPS = 30.0

log = logging.getLogger("fadekit")


class SchemaError(Exception):
    """An input record does not follow its documented layout."""


def _dump_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_config(args) -> Config:
    cfg = Config.load(args.config)
    cfg.apply_overrides(args.override or [])
    validate_config(cfg)
    return cfg


def _video_dirs(root: Path) -> list[Path]:
    """A directory of frames is one video; otherwise each subdirectory is one."""
    if not root.is_dir():
        raise FileNotFoundError(f"input directory not found: {root}")
    if list_frame_files(root):
        return [root]
    subs = sorted(p for p in root.iterdir() if p.is_dir() and list_frame_files(p))
    if not subs:
        raise FrameFormatError(f"{root}: no frames found")
    return subs


def _sources(root: Path, fps: float):
    out = []
    for d in _video_dirs(root):
        src = open_sequence(d, fps)
        src.video_id = d.name
        out.append(src)
    return out


def cmd_detect(args) -> int:
    cfg = _load_config(args)
    sources = _sources(Path(args.input), cfg["video.fps"])
    results = run_many(sources, cfg, threads=args.threads, mask_dump_root=args.dump_masks)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "detections.jsonl", "w") as fh:
        for r in results:
            for d in r.detections:
                fh.write(d.to_json() + "\n")
    _dump_json(out / "incidents.json", [i.to_record() for r in results for i in r.incidents])
    _dump_json(out / "tracks.json", {r.video_id: r.track_records() for r in results})
    n = sum(len(r.detections) for r in results)
    k = sum(len(r.incidents) for r in results)
    print(f"{len(results)} videos, {n} detections, {k} incidents -> {out}")
    return EXIT_OK


def read_detections(path: Path) -> list[Detection]:
    dets = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                dets.append(Detection.from_record(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise SchemaError(f"{path}:{lineno}: bad detection record {line.strip()!r} ({exc})") from exc
    return dets


def read_incidents(path: Path) -> dict[str, list[Incident]]:
    try:
        records = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    out: dict[str, list[Incident]] = {}
    for rec in records:
        try:
            inc = Incident(str(rec["video"]), float(rec["begin_s"]), float(rec["end_s"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise SchemaError(f"{path}: bad incident record {rec!r} ({exc})") from exc
        out.setdefault(inc.video_id, []).append(inc)
    return out


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    dets = read_detections(Path(args.input))
    annotations = load_annotations(args.annotations, (cfg["video.width"], cfg["video.height"]))
    metadata = load_metadata(args.metadata)
    incidents = read_incidents(Path(args.incidents)) if args.incidents else None
    report = evaluate(
        dets, annotations, metadata, fps=cfg["video.fps"], iou_thr=cfg["eval.iou_thr"],
        beta=cfg["eval.beta"], incidents=incidents,
    )
    doc = report.to_dict()
    doc["config"] = {
        "iou_thr": cfg["eval.iou_thr"],
        "beta": cfg["eval.beta"],
        "fps": cfg["video.fps"],
        "smrpn.alpha": cfg["smrpn.alpha"],
        "smrpn.log_base": cfg["smrpn.log_base"],
        "events.merge_gap_s": cfg["events.merge_gap_s"],
        "incidents": "file" if incidents is not None else "from detections",
    }
    doc["tool_version"] = __version__
    if args.output:
        _dump_json(Path(args.output), doc)
    for ex in report.excluded:
        print(f"excluded: {ex['detections']} detections of unknown video {ex['video']!r}", file=sys.stderr)
    print(report.summary_line())
    return EXIT_OK


def _read_splits(path: Path, metadata: dict[str, VideoMeta]) -> dict[str, list[VideoMeta]]:
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    splits = {}
    for name in ("train", "val", "test"):
        vids = doc.get(name, [])
        missing = [v for v in vids if v not in metadata]
        if missing:
            raise SchemaError(f"{path}: split {name!r} lists videos without metadata: {missing}")
        splits[name] = [metadata[v] for v in vids]
    return splits


def cmd_stats(args) -> int:
    cfg = _load_config(args)
    root = Path(args.input)
    if not root.is_dir():
        raise FileNotFoundError(f"annotation directory not found: {root}")
    stats = area_stats(load_annotations(root, (cfg["video.width"], cfg["video.height"])))
    print(f"boxes: {stats.total}")
    for lab, c, p in zip(stats.labels, stats.counts, stats.proportions):
        print(f"  area {lab:>12}: {c:8d}  {p:6.2f} %")
    print(f"median area: {'null' if stats.median is None else f'{stats.median:.2f}'}")
    doc = {"areas": stats.to_dict(), "split_check": None}
    code = EXIT_OK
    if args.splits:
        splits = _read_splits(Path(args.splits), load_metadata(args.metadata))
        rep = check_split(splits["train"], splits["val"], splits["test"])
        doc["split_check"] = rep.to_dict()
        if rep.passed:
            print("split check: PASS")
        else:
            print("split check: FAIL")
            for v in rep.violations:
                print(f"  scene {v['scene']!r} shared by {', '.join(v['splits'])}")
            code = EXIT_SPLIT
    else:
        print("split check: skipped (no --splits file)")
    if args.output:
        _dump_json(Path(args.output), doc)
    return code


def cmd_mask(args) -> int:
    cfg = _load_config(args)
    out = Path(args.output)
    for src in _sources(Path(args.input), cfg["video.fps"]):
        dest = out / src.video_id
        dest.mkdir(parents=True, exist_ok=True)
        state = None
        for frame in src:
            frame = prepare_frame(frame, cfg)
            if state is None:
                state = gmm_new(gmm_params(cfg), frame.pixels.shape)
            write_image(dest / f"{frame.index:06d}.pgm", gmm_apply(state, frame))
        print(f"{src.video_id}: {len(src)} masks -> {dest}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    cfg.set("video.grayscale", True)
    with tempfile.TemporaryDirectory() as tmp:
        if args.input:
            sources = _sources(Path(args.input), cfg["video.fps"])
        else:
            spec = falling_spec(0, video_id="bench", num_frames=args.frames,
                                width=cfg["video.width"], height=cfg["video.height"], noise_sigma=2.0)
            write_corpus(tmp, [spec])
            sources = _sources(Path(tmp) / "frames", cfg["video.fps"])
        t0 = time.perf_counter()
        results = run_many(sources, cfg, threads=1)
        wall = time.perf_counter() - t0
    frames = sum(r.num_frames for r in results)
    fps = frames / wall if wall > 0 else float("inf")
    print(f"bench: {frames} frames at {cfg['video.width']}x{cfg['video.height']} in {wall:.3f} s = {fps:.1f} frames/s")
    ok = fps >= BENCH_TARGET_FPS
    if not ok or args.verbose:
        print("per-stage time (ms/frame):")
        for stage in STAGES:
            total = sum(r.timings.get(stage, 0.0) for r in results)
            print(f"  {stage:>10}: {1000.0 * total / max(frames, 1):8.3f}")
    print(f"budget {BENCH_TARGET_FPS:.0f} frames/s: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK


def synth_specs(count: int, distractors: int, seed: int, **overrides) -> list[SynthSpec]:
    specs = [falling_spec(seed + i, **overrides) for i in range(count)]
    specs += [horizontal_spec(seed + i, **overrides) for i in range(distractors)]
    return specs


def cmd_synth(args) -> int:
    specs = synth_specs(args.count, args.distractors, args.seed, num_frames=args.frames)
    write_corpus(args.output, specs)
    for spec in specs:
        _, ann = synth_generate(spec)
        n = sum(1 for a in ann if a.boxes)
        print(f"{spec.video_id}: {spec.num_frames} frames, object in {n}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    epilog = "configuration keys (section.key = default):\n" + describe_keys()
    fmt = argparse.RawDescriptionHelpFormatter
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--override", action="append", metavar="KEY=VALUE", help="set one config key (repeatable)")
    common.add_argument("--threads", type=int, default=1, help="worker threads across videos")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fadekit", description="Falling-object detection toolkit.",
                                     epilog=epilog, formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"fadekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text,
                              epilog=epilog, formatter_class=fmt)

    p = add("detect", "run the detector on frame directories")
    p.add_argument("--input", required=True, help="frame directory, or a directory of per-video frame directories")
    p.add_argument("--output", required=True, help="output directory for detections.jsonl, incidents.json, tracks.json")
    p.add_argument("--dump-masks", metavar="DIR", help="write per-frame foreground masks as PGM")
    p.set_defaults(func=cmd_detect)

    p = add("evaluate", "score detections against VOC annotations")
    p.add_argument("--input", required=True, help="detections JSON-lines file")
    p.add_argument("--annotations", required=True, help="annotation root: <root>/<video>/*.xml")
    p.add_argument("--metadata", help="metadata directory: <dir>/<video>.json")
    p.add_argument("--incidents", help="incident JSON from detect (default: derived from detections)")
    p.add_argument("--output", help="report JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = add("stats", "box-area histogram and scene split check")
    p.add_argument("--input", required=True, help="annotation root")
    p.add_argument("--metadata", help="metadata directory")
    p.add_argument("--splits", help='JSON {"train": [...], "val": [...], "test": [...]} of video ids')
    p.add_argument("--output", help="stats JSON path")
    p.set_defaults(func=cmd_stats)

    p = add("mask", "write background-subtraction masks")
    p.add_argument("--input", required=True, help="frame directory or directory of videos")
    p.add_argument("--output", required=True, help="mask output root")
    p.set_defaults(func=cmd_mask)

    p = add("bench", "measure single-threaded pipeline throughput")
    p.add_argument("--input", help="frames to benchmark on (default: a synthetic video)")
    p.add_argument("--frames", type=int, default=150, help="synthetic video length")
    p.set_defaults(func=cmd_bench)

    p = add("synth", "write a seeded synthetic corpus")
    p.add_argument("--output", required=True, help="corpus root (frames/, annotations/, metadata/)")
    p.add_argument("--count", type=int, default=20, help="free-fall videos")
    p.add_argument("--distractors", type=int, default=0, help="horizontal-motion videos")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=150)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError, AnnotationError, SynthSpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FrameFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
