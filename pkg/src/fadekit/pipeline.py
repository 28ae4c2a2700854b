"""End-to-end classical detector: frames -> mixture mask -> candidates ->
tracks -> falling detections and incidents.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import attention as att
from .background import GmmParams, gmm_apply, gmm_new
from .boxes import BoundingBox, Detection
from .config import BUILTIN_HEADS, Config
from .errors import ConfigError, FrameFormatError
from .events import Incident, incidents_from_tracks
from .frame_io import Frame, VideoSource, resize, to_grayscale, write_image
from .mask_ops import Blob, connected_components, morph_open
from .smrpn import RefinerHeads, anchor_coverage, generate_anchors, propose
from .tracker import FallPhysicsParams, Linker, Track, is_falling

log = logging.getLogger(__name__)

SCORING_MODES = ("blob_direct", "smrpn_refined")
STAGES = ("decode", "gmm", "mask", "candidates", "track")


@dataclass
class PipelineResult:
    video_id: str
    detections: list[Detection]
    incidents: list[Incident]
    tracks: list[Track]
    falling: list[bool]
    num_frames: int
    timings: dict[str, float] = field(default_factory=dict)  # seconds per stage

    def track_records(self) -> list[dict]:
        return [t.to_record(f) for t, f in zip(self.tracks, self.falling)]


def gmm_params(cfg: Config) -> GmmParams:
    return GmmParams(
        max_components=cfg["gmm.max_components"],
        history=cfg["gmm.history"],
        var_threshold=cfg["gmm.var_threshold"],
        var_init=cfg["gmm.var_init"],
        var_min=cfg["gmm.var_min"],
        var_max=cfg["gmm.var_max"],
        background_ratio=cfg["gmm.background_ratio"],
        complexity_prior=cfg["gmm.complexity_prior"],
    )


def tracker_params(cfg: Config) -> FallPhysicsParams:
    return FallPhysicsParams(
        g=cfg["tracker.g"],
        min_track_len=cfg["tracker.min_track_len"],
        max_gap=cfg["tracker.max_gap"],
        min_down_fraction=cfg["tracker.min_down_fraction"],
        max_link_dist=cfg["tracker.max_link_dist"],
        gate_min=cfg["tracker.gate_min"],
        gate_speed_frac=cfg["tracker.gate_speed_frac"],
    )


def load_heads(spec: str) -> RefinerHeads:
    if spec == BUILTIN_HEADS:
        text = resources.files("fadekit.data").joinpath("toy_heads.json").read_text()
        return RefinerHeads.from_dict(json.loads(text))
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"smrpn.heads file not found: {path}")
    return RefinerHeads.load(path)


def validate_config(cfg: Config) -> None:
    """Fail early on inconsistent settings, before any frame is read."""
    if cfg["pipeline.scoring"] not in SCORING_MODES:
        raise ConfigError(f"pipeline.scoring must be one of {SCORING_MODES}, got {cfg['pipeline.scoring']!r}")
    if cfg["video.width"] < 1 or cfg["video.height"] < 1:
        raise ConfigError("video.width and video.height must be positive")
    if cfg["video.fps"] <= 0:
        raise ConfigError("video.fps must be positive")
    if cfg["mask.open_radius"] < 0 or cfg["mask.min_area"] < 1 or cfg["mask.warmup_frames"] < 0:
        raise ConfigError("mask settings out of range")
    gmm_params(cfg)
    tracker_params(cfg)
    if cfg["attention.enabled"]:
        path = Path(cfg["attention.weights"])
        if not path.is_file():
            raise ConfigError(f"attention.weights file not found: {path}")
        if cfg["attention.stride"] < 1:
            raise ConfigError("attention.stride must be >= 1")
    if cfg["pipeline.scoring"] == "smrpn_refined":
        heads = load_heads(cfg["smrpn.heads"])
        if heads.num_stages != cfg["smrpn.stages"]:
            raise ConfigError(f"smrpn.stages={cfg['smrpn.stages']} but heads define {heads.num_stages} stages")


def blob_score(blob: Blob) -> float:
    """Fill ratio of the blob inside its box: compact blobs score higher."""
    return blob.area / blob.box.area


class _AttentionGate:
    def __init__(self, cfg: Config, width: int, height: int):
        self.weights = att.AttentionWeights.load(cfg["attention.weights"])
        self.stride = cfg["attention.stride"]
        self.fh = max(1, height // self.stride)
        self.fw = max(1, width // self.stride)
        self.sx = self.fw / width
        self.sy = self.fh / height

    def map(self, gray: np.ndarray, mask: np.ndarray) -> np.ndarray:
        feat = att.resize_mask(gray.astype(np.float64) / 255.0, self.fh, self.fw)
        m = att.resize_mask(mask, self.fh, self.fw)
        return att.compute_map(feat, m, self.weights)[:, :, 0]

    def mean_over(self, amap: np.ndarray, box: BoundingBox) -> float:
        x0 = int(np.floor(box.xmin * self.sx))
        y0 = int(np.floor(box.ymin * self.sy))
        x1 = max(x0 + 1, int(np.ceil(box.xmax * self.sx)))
        y1 = max(y0 + 1, int(np.ceil(box.ymax * self.sy)))
        return float(amap[y0:y1, x0:x1].mean())


class _SmrpnCandidates:
    def __init__(self, cfg: Config, width: int, height: int):
        self.grids = generate_anchors(width, height, [(s, float(s)) for s in cfg["smrpn.strides"]])
        self.heads = load_heads(cfg["smrpn.heads"])
        self.stages = cfg["smrpn.stages"]
        self.nms_thr = cfg["smrpn.nms_thr"]
        self.top_k = cfg["smrpn.top_k"]
        self.min_cov = cfg["smrpn.min_coverage"]
        self.size = (width, height)

    def __call__(self, mask: np.ndarray, frame_index: int) -> list[Blob]:
        cov = anchor_coverage(self.grids, mask)
        props = propose(
            self.grids, self.heads, cov, self.stages, self.nms_thr, self.top_k,
            frame_index, self.size, min_score=self.min_cov,
        )
        h, w = mask.shape
        rects = []
        for d in props:
            b = d.box
            x0, y0 = max(int(np.floor(b.xmin)), 0), max(int(np.floor(b.ymin)), 0)
            x1, y1 = min(int(np.ceil(b.xmax)), w), min(int(np.ceil(b.ymax)), h)
            sub = mask[y0:y1, x0:x1]
            if not sub.any():
                continue
            ys, xs = np.nonzero(sub)
            rects.append([x0 + xs.min(), y0 + ys.min(), x0 + xs.max() + 1, y0 + ys.max() + 1])
        blobs = []
        for x0, y0, x1, y1 in _merge_touching(rects):
            ys, xs = np.nonzero(mask[y0:y1, x0:x1])
            box = BoundingBox(float(x0), float(y0), float(x1), float(y1))
            blobs.append(Blob(box, int(len(xs)), (x0 + xs.mean() + 0.5, y0 + ys.mean() + 0.5)))
        return sorted(blobs, key=lambda bl: (bl.box.ymin, bl.box.xmin))


def _merge_touching(rects: list[list[int]]) -> list[list[int]]:
    """Union integer rectangles that overlap or share an edge, until none do.

    Proposals from neighbouring anchors tighten onto pieces of the same
    foreground region; merging them yields one candidate per region.
    """
    rects = [list(r) for r in rects]
    merged = True
    while merged:
        merged = False
        out: list[list[int]] = []
        for r in rects:
            for o in out:
                if r[0] <= o[2] and o[0] <= r[2] and r[1] <= o[3] and o[1] <= r[3]:
                    o[0], o[1] = min(o[0], r[0]), min(o[1], r[1])
                    o[2], o[3] = max(o[2], r[2]), max(o[3], r[3])
                    merged = True
                    break
            else:
                out.append(r)
        rects = out
    return sorted(rects)


def prepare_frame(frame: Frame, cfg: Config) -> Frame:
    if cfg["video.grayscale"]:
        frame = to_grayscale(frame)
    return resize(frame, cfg["video.width"], cfg["video.height"])


def run_video(
    source: VideoSource, cfg: Config | None = None, mask_dump_dir: str | Path | None = None
) -> PipelineResult:
    """Detect falling objects in one video.

    Only detections on tracks judged to be falling are emitted. Each
    detection's score is the blob's fill ratio, multiplied by the mean
    attention value over the blob when attention gating is enabled.

    Raises:
        ConfigError: inconsistent configuration.
        FrameFormatError: a frame could not be read (message names the frame index).
    """
    cfg = cfg or Config()
    validate_config(cfg)
    width, height = cfg["video.width"], cfg["video.height"]
    state = None
    shape = None
    linker = Linker(tracker_params(cfg))
    gate = _AttentionGate(cfg, width, height) if cfg["attention.enabled"] else None
    smrpn = _SmrpnCandidates(cfg, width, height) if cfg["pipeline.scoring"] == "smrpn_refined" else None
    radius, min_area, warmup = cfg["mask.open_radius"], cfg["mask.min_area"], cfg["mask.warmup_frames"]
    if mask_dump_dir is not None:
        Path(mask_dump_dir).mkdir(parents=True, exist_ok=True)
    timings = dict.fromkeys(STAGES, 0.0)
    n = 0
    for i in range(len(source)):
        t0 = time.perf_counter()
        try:
            frame = prepare_frame(source.frame(i), cfg)
        except (OSError, FrameFormatError) as exc:
            raise FrameFormatError(f"{source.video_id}: frame {i}: {exc}") from exc
        if state is None:
            shape = frame.pixels.shape
            state = gmm_new(gmm_params(cfg), shape)
        elif frame.pixels.shape != shape:
            raise FrameFormatError(f"{source.video_id}: frame {i}: shape {frame.pixels.shape} != {shape}")
        t1 = time.perf_counter()
        mask = gmm_apply(state, frame.pixels)
        t2 = time.perf_counter()
        if radius > 0:
            mask = morph_open(mask, radius)
        if mask_dump_dir is not None:
            write_image(Path(mask_dump_dir) / f"{i:06d}.pgm", mask)
        t3 = time.perf_counter()
        blobs: list[Blob] = []
        scores: list[float] = []
        if i >= warmup:
            if smrpn is not None:
                blobs = [b for b in smrpn(mask, i) if b.area >= min_area]
            else:
                blobs = connected_components(mask, min_area)
            scores = [blob_score(b) for b in blobs]
            if gate is not None and blobs:
                gray = frame.pixels if frame.pixels.ndim == 2 else to_grayscale(frame).pixels
                amap = gate.map(gray, mask)
                scores = [s * gate.mean_over(amap, b.box) for s, b in zip(scores, blobs)]
        t4 = time.perf_counter()
        linker.step(i, blobs, scores)
        t5 = time.perf_counter()
        for name, dt in zip(STAGES, (t1 - t0, t2 - t1, t3 - t2, t4 - t3, t5 - t4)):
            timings[name] += dt
        n += 1

    t0 = time.perf_counter()
    params = tracker_params(cfg)
    tracks = linker.finish()
    falling = [is_falling(t, params) for t in tracks]
    detections = [d for t, f in zip(tracks, falling) if f for d in t.detections(source.video_id)]
    detections.sort(key=lambda d: (d.frame_index, d.box.xmin, d.box.ymin, -d.score))
    incidents = incidents_from_tracks(
        [t for t, f in zip(tracks, falling) if f], source.fps, source.video_id, params, cfg["events.merge_gap_s"]
    )
    timings["track"] += time.perf_counter() - t0
    log.debug("%s: %d frames, %d tracks, %d falling", source.video_id, n, len(tracks), sum(falling))
    return PipelineResult(source.video_id, detections, incidents, tracks, falling, n, timings)


def run_many(
    sources: Sequence[VideoSource], cfg: Config | None = None, threads: int = 1,
    mask_dump_root: str | Path | None = None,
) -> list[PipelineResult]:
    """Run several videos, optionally on a thread pool; results ordered by video id."""
    cfg = cfg or Config()
    validate_config(cfg)

    def one(src: VideoSource) -> PipelineResult:
        dump = Path(mask_dump_root) / src.video_id if mask_dump_root is not None else None
        return run_video(src, cfg, dump)

    if threads <= 1 or len(sources) <= 1:
        results = [one(s) for s in sources]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, sources))
    return sorted(results, key=lambda r: r.video_id)
