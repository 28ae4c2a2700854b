"""Falling incidents as time ranges, and the time-range-overlap score."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .tracker import FallPhysicsParams, Track, is_falling

MERGE_GAP_S = 0.5


@dataclass(frozen=True)
class Incident:
    video_id: str
    begin_s: float
    end_s: float

    def __post_init__(self):
        if self.end_s < self.begin_s:
            raise ValueError(f"incident ends ({self.end_s}) before it begins ({self.begin_s})")

    @property
    def duration(self) -> float:
        return self.end_s - self.begin_s

    def to_record(self) -> dict:
        return {"video": self.video_id, "begin_s": self.begin_s, "end_s": self.end_s}


def merge_intervals(incidents: Iterable[Incident], max_gap_s: float = MERGE_GAP_S) -> list[Incident]:
    """Merge incidents of the same video that overlap or are at most ``max_gap_s`` apart."""
    by_video: dict[str, list[Incident]] = {}
    for inc in incidents:
        by_video.setdefault(inc.video_id, []).append(inc)
    out = []
    for vid in sorted(by_video):
        items = sorted(by_video[vid], key=lambda i: (i.begin_s, i.end_s))
        cur_b, cur_e = items[0].begin_s, items[0].end_s
        for inc in items[1:]:
            # small epsilon so a gap of exactly max_gap_s merges despite float error
            if inc.begin_s - cur_e <= max_gap_s + 1e-9:
                cur_e = max(cur_e, inc.end_s)
            else:
                out.append(Incident(vid, cur_b, cur_e))
                cur_b, cur_e = inc.begin_s, inc.end_s
        out.append(Incident(vid, cur_b, cur_e))
    return out


def incidents_from_tracks(
    tracks: Sequence[Track],
    fps: float,
    video_id: str = "video",
    params: FallPhysicsParams | None = None,
    max_gap_s: float = MERGE_GAP_S,
) -> list[Incident]:
    """Turn each falling track into ``[first_frame/fps, last_frame/fps]`` and merge."""
    if fps <= 0:
        raise ValueError("fps must be positive")
    raw = [
        Incident(video_id, t.first_frame / fps, t.last_frame / fps)
        for t in tracks
        if len(t) >= 2 and is_falling(t, params)
    ]
    return merge_intervals(raw, max_gap_s)


def tro(pred: Incident, gt: Incident) -> float:
    """Intersection over union of two time ranges.

    Two zero-length ranges score 1 when they coincide and 0 otherwise.
    """
    if pred.video_id != gt.video_id:
        raise ValueError(f"cannot compare incidents of videos {pred.video_id!r} and {gt.video_id!r}")
    inter = max(0.0, min(pred.end_s, gt.end_s) - max(pred.begin_s, gt.begin_s))
    union = pred.duration + gt.duration - inter
    if union <= 0.0:
        return 1.0 if (pred.begin_s, pred.end_s) == (gt.begin_s, gt.end_s) else 0.0
    return inter / union


def match_incidents(preds: Sequence[Incident], gts: Sequence[Incident]) -> list[tuple[int, int, float]]:
    """Greedy one-to-one pairing by descending TRO; only pairs with TRO > 0."""
    pairs = []
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            s = tro(p, g)
            if s > 0:
                pairs.append((-s, i, j))
    pairs.sort()
    used_p, used_g, out = set(), set(), []
    for neg, i, j in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        out.append((i, j, -neg))
    return out


def tro_dataset(
    preds: Mapping[str, Sequence[Incident]], gts: Mapping[str, Sequence[Incident]]
) -> float:
    """Mean TRO over ground-truth incidents after per-video greedy matching.

    Unmatched GT incidents score 0. Returns 0.0 when there is no GT incident.
    """
    total, count = 0.0, 0
    for vid in sorted(gts):
        g = list(gts[vid])
        count += len(g)
        total += sum(s for _, _, s in match_incidents(list(preds.get(vid, [])), g))
    return total / count if count else 0.0
