"""Frame-to-frame blob linking and the free-fall consistency test."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .boxes import BoundingBox, Detection
from .errors import ConfigError
from .mask_ops import Blob

STANDARD_GRAVITY = 9.8


@dataclass(frozen=True)
class FallPhysicsParams:
    g: float = STANDARD_GRAVITY
    min_track_len: int = 3
    max_gap: int = 2
    min_down_fraction: float = 0.8
    max_link_dist: float = 120.0
    # gate around the motion prediction once a track has a velocity
    gate_min: float = 6.0
    gate_speed_frac: float = 0.25

    def __post_init__(self):
        if self.min_track_len < 2:
            raise ConfigError("tracker.min_track_len must be >= 2")
        if not (0.0 < self.min_down_fraction <= 1.0):
            raise ConfigError("tracker.min_down_fraction must lie in (0, 1]")
        if self.max_gap < 0:
            raise ConfigError("tracker.max_gap must be >= 0")
        if self.max_link_dist <= 0:
            raise ConfigError("tracker.max_link_dist must be positive")


@dataclass
class Track:
    track_id: int
    frames: list[int] = field(default_factory=list)
    blobs: list[Blob] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def first_frame(self) -> int:
        return self.frames[0]

    @property
    def last_frame(self) -> int:
        return self.frames[-1]

    @property
    def centroids(self) -> np.ndarray:
        return np.array([b.centroid for b in self.blobs], dtype=np.float64).reshape(-1, 2)

    @property
    def vertical_velocities(self) -> list[float]:
        """Centroid y-velocity in px/frame for each consecutive step."""
        c = self.centroids
        return [
            (c[i + 1, 1] - c[i, 1]) / (self.frames[i + 1] - self.frames[i]) for i in range(len(self.frames) - 1)
        ]

    def detections(self, video: str = "") -> list[Detection]:
        return [Detection(b.box, s, f, video) for f, b, s in zip(self.frames, self.blobs, self.scores)]

    def predict(self, frame: int) -> tuple[float, float]:
        """Centroid expected at ``frame`` under constant acceleration."""
        c = self.centroids
        if len(c) == 1:
            return float(c[0, 0]), float(c[0, 1])
        dt = frame - self.frames[-1]
        v = (c[-1] - c[-2]) / (self.frames[-1] - self.frames[-2])
        acc = np.zeros(2)
        if len(c) >= 3:
            v_prev = (c[-2] - c[-3]) / (self.frames[-2] - self.frames[-3])
            acc = (v - v_prev) / ((self.frames[-1] - self.frames[-3]) / 2.0)
        p = c[-1] + v * dt + acc * dt * (dt + 1) / 2.0
        return float(p[0]), float(p[1])

    def speed(self) -> float:
        if len(self.frames) < 2:
            return 0.0
        c = self.centroids
        return float(np.hypot(*(c[-1] - c[-2])) / (self.frames[-1] - self.frames[-2]))

    def to_record(self, falling: bool) -> dict:
        return {
            "track_id": self.track_id,
            "frames": list(self.frames),
            "bboxes": [b.box.as_list() for b in self.blobs],
            "falling": bool(falling),
        }


class Linker:
    """Streaming greedy linker.

    Call :meth:`step` once per frame in increasing frame order, then
    :meth:`finish`. A track with one point accepts any blob within
    ``max_link_dist`` per elapsed frame, with downward moves ranked first;
    longer tracks only accept blobs near their constant-acceleration
    prediction. Tracks shorter than ``min_track_len`` cannot bridge gaps.
    """

    def __init__(self, params: FallPhysicsParams | None = None):
        self.params = params or FallPhysicsParams()
        self._active: list[Track] = []
        self._closed: list[Track] = []
        self._next_id = 0
        self._last_frame: int | None = None

    def _gate(self, track: Track, dt: int) -> float:
        p = self.params
        if len(track) < p.min_track_len and dt > 1:
            return -1.0  # tentative tracks must be consecutive
        if len(track) == 1:
            return p.max_link_dist
        return min(p.max_link_dist * dt, p.gate_min + p.gate_speed_frac * track.speed() * dt)

    def step(self, frame: int, blobs: Sequence[Blob], scores: Sequence[float] | None = None) -> None:
        p = self.params
        if self._last_frame is not None and frame <= self._last_frame:
            raise ValueError("frames must be supplied in strictly increasing order")
        self._last_frame = frame
        if scores is None:
            scores = [1.0] * len(blobs)

        still = []
        for t in self._active:
            if frame - t.last_frame - 1 > p.max_gap:
                self._closed.append(t)
            else:
                still.append(t)
        self._active = still

        pairs = []
        for ti, t in enumerate(self._active):
            dt = frame - t.last_frame
            px, py = t.predict(frame)
            gate = self._gate(t, dt)
            ly = t.blobs[-1].centroid[1]
            for bi, b in enumerate(blobs):
                dist = math.hypot(b.centroid[0] - px, b.centroid[1] - py)
                if dist > gate:
                    continue
                cost = dist
                if len(t) == 1 and b.centroid[1] <= ly:
                    cost += p.max_link_dist * dt  # rank non-downward seeds last
                pairs.append((cost, ti, bi))
        pairs.sort()

        used_t, used_b = set(), set()
        for _, ti, bi in pairs:
            if ti in used_t or bi in used_b:
                continue
            used_t.add(ti)
            used_b.add(bi)
            t = self._active[ti]
            t.frames.append(frame)
            t.blobs.append(blobs[bi])
            t.scores.append(float(scores[bi]))

        for bi, b in enumerate(blobs):
            if bi not in used_b:
                self._active.append(Track(self._next_id, [frame], [b], [float(scores[bi])]))
                self._next_id += 1

    def finish(self) -> list[Track]:
        tracks = self._closed + self._active
        self._closed, self._active = [], []
        tracks = [t for t in tracks if len(t) >= self.params.min_track_len]
        tracks.sort(key=lambda t: (t.first_frame, t.track_id))
        return tracks


def link(frames: Iterable[tuple[int, Sequence[Blob]]], params: FallPhysicsParams | None = None) -> list[Track]:
    """Link ``(frame_index, blobs)`` pairs into tracks of at least ``min_track_len`` points."""
    linker = Linker(params)
    for frame, blobs in sorted(frames, key=lambda fb: fb[0]):
        linker.step(frame, blobs)
    return linker.finish()


def is_falling(track: Track, params: FallPhysicsParams | None = None) -> bool:
    """Mostly-downward steps and a non-decreasing vertical velocity.

    The velocity trend is the least-squares slope of per-step ``v_y`` against
    the step midpoint time; with a single step it counts as zero.
    """
    p = params or FallPhysicsParams()
    if len(track) < 2:
        raise ValueError("track needs at least two points to judge its motion")
    v = np.array(track.vertical_velocities)
    down = float(np.mean(v > 0))
    if down < p.min_down_fraction:
        return False
    if len(v) < 2:
        return True
    f = np.asarray(track.frames, dtype=np.float64)
    t = (f[1:] + f[:-1]) / 2.0
    tc = t - t.mean()
    slope = float(np.dot(tc, v - v.mean()) / np.dot(tc, tc))
    # tolerate rounding noise of exactly-constant velocities
    return slope >= -1e-9


def impact_force(mass: float, drop_height: float, impact_duration: float, g: float = STANDARD_GRAVITY) -> tuple[float, float]:
    """Mean stopping force of a dropped mass, via the momentum theorem.

    Returns:
        (force in newtons, equivalent weight in kilograms-force)
    """
    if mass <= 0 or impact_duration <= 0 or g <= 0:
        raise ValueError("mass, impact duration and g must be positive")
    if drop_height < 0:
        raise ValueError("drop height must be non-negative")
    v = math.sqrt(2.0 * g * drop_height)
    force = mass * v / impact_duration
    return force, force / g
