"""Seeded synthetic videos with exact ground truth, used as test fixtures.

Objects are solid rectangles drawn at integer positions. A position along the
motion law is rounded half-up, and the drawn rectangle *is* the ground-truth
box, clipped to the frame.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .boxes import BoundingBox
from .errors import SynthSpecError
from .evaluation import Annotation, VideoMeta, write_voc
from .frame_io import VideoSource, write_image

MOTIONS = ("free_fall", "linear", "static")


@dataclass(frozen=True)
class SynthObject:
    width: int
    height: int
    x0: float
    y0: float
    start_frame: int = 0
    motion: str = "free_fall"
    vx: float = 0.0
    vy: float = 2.5
    accel: float = 1.0  # px / frame^2, free fall only
    intensity: int = 240
    duration: int | None = None  # frames; None = until it leaves the frame

    def position(self, frame: int) -> tuple[int, int]:
        t = frame - self.start_frame
        if self.motion == "free_fall":
            x = self.x0 + self.vx * t
            y = self.y0 + self.vy * t + 0.5 * self.accel * t * t
        elif self.motion == "linear":
            x, y = self.x0 + self.vx * t, self.y0 + self.vy * t
        else:
            x, y = self.x0, self.y0
        return math.floor(x + 0.5), math.floor(y + 0.5)


@dataclass(frozen=True)
class SynthSpec:
    width: int = 640
    height: int = 480
    num_frames: int = 150
    fps: float = 30.0
    background: str = "gradient"  # "constant" or "gradient"
    bg_value: float = 100.0
    bg_range: tuple[float, float] = (60.0, 180.0)  # left-to-right gradient
    objects: tuple[SynthObject, ...] = field(default_factory=tuple)
    noise_sigma: float = 0.0
    seed: int = 0
    min_duration: int = 3
    video_id: str = "synth"


def background_image(spec: SynthSpec) -> np.ndarray:
    if spec.background == "constant":
        return np.full((spec.height, spec.width), float(spec.bg_value), dtype=np.float32)
    if spec.background == "gradient":
        lo, hi = spec.bg_range
        row = np.linspace(lo, hi, spec.width).astype(np.float32)
        return np.tile(row, (spec.height, 1))
    raise SynthSpecError(f"unknown background {spec.background!r}")


def _clip_box(spec: SynthSpec, x: int, y: int, obj: SynthObject) -> BoundingBox | None:
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + obj.width, spec.width), min(y + obj.height, spec.height)
    if x1 <= x0 or y1 <= y0:
        return None
    return BoundingBox(float(x0), float(y0), float(x1), float(y1))


def object_boxes(spec: SynthSpec, obj: SynthObject) -> dict[int, BoundingBox]:
    """Visible ground-truth box of ``obj`` per frame."""
    out = {}
    end = spec.num_frames if obj.duration is None else min(spec.num_frames, obj.start_frame + obj.duration)
    for f in range(max(obj.start_frame, 0), end):
        box = _clip_box(spec, *obj.position(f), obj)
        if box is None:
            if out:
                break  # left the frame for good
            continue
        out[f] = box
    return out


def _validate(spec: SynthSpec) -> list[dict[int, BoundingBox]]:
    if spec.width < 1 or spec.height < 1 or spec.num_frames < 1 or spec.fps <= 0:
        raise SynthSpecError("frame size, frame count and fps must be positive")
    if spec.noise_sigma < 0:
        raise SynthSpecError("noise sigma must be >= 0")
    tracks = []
    for i, obj in enumerate(spec.objects):
        if obj.motion not in MOTIONS:
            raise SynthSpecError(f"object {i}: unknown motion law {obj.motion!r}")
        if obj.width < 1 or obj.height < 1:
            raise SynthSpecError(f"object {i}: size must be positive")
        boxes = object_boxes(spec, obj)
        if len(boxes) < spec.min_duration:
            raise SynthSpecError(
                f"object {i} is visible for {len(boxes)} frames, fewer than min_duration={spec.min_duration}"
            )
        tracks.append(boxes)
    return tracks


def render_frame(spec: SynthSpec, frame: int, tracks: Sequence[dict[int, BoundingBox]], bg: np.ndarray) -> np.ndarray:
    img = bg.copy()
    for obj, boxes in zip(spec.objects, tracks):
        b = boxes.get(frame)
        if b is not None:
            img[int(b.ymin) : int(b.ymax), int(b.xmin) : int(b.xmax)] = obj.intensity
    if spec.noise_sigma > 0:
        rng = np.random.default_rng([spec.seed, frame])
        noise = rng.standard_normal(img.shape, dtype=np.float32)
        noise *= np.float32(spec.noise_sigma)
        img += noise
    img += np.float32(0.5)
    np.floor(img, out=img)
    np.clip(img, 0, 255, out=img)
    return img.astype(np.uint8)


def synth_generate(spec: SynthSpec) -> tuple[VideoSource, list[Annotation]]:
    """Build a lazily rendered video and its per-frame annotations.

    Raises:
        SynthSpecError: invalid spec, or an object visible for fewer than
            ``min_duration`` frames.
    """
    tracks = _validate(spec)
    bg = background_image(spec)
    loaders = [lambda f=f: render_frame(spec, f, tracks, bg) for f in range(spec.num_frames)]
    source = VideoSource(loaders, spec.fps, (spec.width, spec.height), "grayscale", video_id=spec.video_id)
    annotations = []
    for f in range(spec.num_frames):
        boxes = [t[f] for t in tracks if f in t]
        annotations.append(Annotation(spec.video_id, f, boxes, f"{f:06d}.pgm", ["object"] * len(boxes), (spec.width, spec.height)))
    return source, annotations


def falling_spec(seed: int, video_id: str | None = None, **overrides) -> SynthSpec:
    """Random free-fall scene: one object of 9-400 px^2, noise sigma <= 3."""
    rng = np.random.default_rng(seed)
    w = int(rng.integers(3, 21))
    h = int(np.clip(w + rng.integers(-2, 3), 3, 20))
    lo = float(rng.uniform(40, 110))
    intensity = int(rng.choice([int(rng.uniform(0, 20)), int(rng.uniform(225, 255))]))
    obj = SynthObject(
        width=w, height=h,
        x0=float(rng.integers(40, 600 - w)), y0=float(rng.integers(0, 60)),
        start_frame=int(rng.integers(20, 90)), motion="free_fall",
        vx=float(rng.uniform(-0.5, 0.5)), vy=2.5, accel=1.0, intensity=intensity,
    )
    params = dict(
        objects=(obj,), background="gradient", bg_range=(lo, lo + float(rng.uniform(30, 90))),
        noise_sigma=float(rng.uniform(0.0, 3.0)), seed=seed, video_id=video_id or f"fall_{seed:03d}",
    )
    params.update(overrides)
    return SynthSpec(**params)


def horizontal_spec(seed: int, video_id: str | None = None, **overrides) -> SynthSpec:
    """Random distractor: an object crossing the frame horizontally."""
    rng = np.random.default_rng(10_000 + seed)
    w = int(rng.integers(3, 21))
    h = int(np.clip(w + rng.integers(-2, 3), 3, 20))
    lo = float(rng.uniform(40, 110))
    speed = float(rng.uniform(3, 9)) * (1 if rng.random() < 0.5 else -1)
    x0 = 0.0 if speed > 0 else float(640 - w)
    obj = SynthObject(
        width=w, height=h, x0=x0, y0=float(rng.integers(20, 460 - h)),
        start_frame=int(rng.integers(20, 60)), motion="linear", vx=speed, vy=0.0,
        intensity=int(rng.choice([int(rng.uniform(0, 20)), int(rng.uniform(225, 255))])),
    )
    params = dict(
        objects=(obj,), background="gradient", bg_range=(lo, lo + float(rng.uniform(30, 90))),
        noise_sigma=float(rng.uniform(0.0, 3.0)), seed=seed, video_id=video_id or f"horiz_{seed:03d}",
    )
    params.update(overrides)
    return SynthSpec(**params)


def write_corpus(root: str | Path, specs: Sequence[SynthSpec]) -> None:
    """Write ``frames/<vid>/*.pgm``, ``annotations/<vid>/*.xml`` and ``metadata/<vid>.json``."""
    root = Path(root)
    for spec in specs:
        source, annotations = synth_generate(spec)
        fdir = root / "frames" / spec.video_id
        adir = root / "annotations" / spec.video_id
        fdir.mkdir(parents=True, exist_ok=True)
        adir.mkdir(parents=True, exist_ok=True)
        for frame, ann in zip(source, annotations):
            write_image(fdir / f"{frame.index:06d}.pgm", frame.pixels)
            write_voc(adir / f"{frame.index:06d}.xml", ann.filename, (spec.width, spec.height), ann.boxes, "packaging boxes")
        meta = VideoMeta(
            spec.video_id, scene="synthetic", weather="fair", lighting="grayscale",
            resolution=f"{spec.width}x{spec.height}", category="packaging boxes", camera_angle=45,
        )
        (root / "metadata").mkdir(parents=True, exist_ok=True)
        (root / "metadata" / f"{spec.video_id}.json").write_text(json.dumps(meta.to_record(), indent=2) + "\n")
