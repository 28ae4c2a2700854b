"""Ground-truth ingestion, detection matching, precision/recall/F-measure,
metadata breakdowns and dataset statistics.
"""

from __future__ import annotations

import json
import os
import re
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .boxes import BoundingBox, Detection, iou
from .errors import AnnotationError
from .events import Incident, merge_intervals, tro_dataset

IOU_THRESHOLD = 0.3
WEATHERS = ("fair", "cloudy", "overcast", "rainy")
LIGHTINGS = ("RGB", "grayscale")
CATEGORIES = (
    "clothes", "shoes", "kitchen waste", "books", "spitballs", "bottles", "packaging bags", "packaging boxes",
)
CAMERA_ANGLES = (30, 45, 60)
BREAKDOWN_AXES = ("weather", "lighting", "resolution", "scene")
AREA_BIN_EDGES = (25.0, 100.0, 225.0, 400.0)
AREA_BIN_LABELS = ("(0,5^2]", "(5^2,10^2]", "(10^2,15^2]", "(15^2,20^2]", "(20^2,inf)")


@dataclass
class Annotation:
    video_id: str
    frame_index: int
    boxes: list[BoundingBox] = field(default_factory=list)
    filename: str = ""
    names: list[str] = field(default_factory=list)
    native_size: tuple[int, int] | None = None


@dataclass(frozen=True)
class VideoMeta:
    video_id: str
    scene: str
    weather: str
    lighting: str | None = None
    resolution: str | None = None
    category: str | None = None
    camera_angle: int | None = None

    def __post_init__(self):
        if self.weather not in WEATHERS:
            raise AnnotationError(f"{self.video_id}: unknown weather {self.weather!r}")
        if self.lighting is not None and self.lighting not in LIGHTINGS:
            raise AnnotationError(f"{self.video_id}: unknown lighting {self.lighting!r}")
        if self.category is not None and self.category not in CATEGORIES:
            raise AnnotationError(f"{self.video_id}: unknown category {self.category!r}")
        if self.camera_angle is not None and self.camera_angle not in CAMERA_ANGLES:
            raise AnnotationError(f"{self.video_id}: unknown camera angle {self.camera_angle!r}")
        if self.resolution is not None and not re.fullmatch(r"\d+x\d+", self.resolution):
            raise AnnotationError(f"{self.video_id}: resolution must look like 1280x720, got {self.resolution!r}")

    @classmethod
    def from_record(cls, video_id: str, rec: Mapping) -> "VideoMeta":
        try:
            angle = rec.get("camera_angle")
            return cls(
                video_id,
                str(rec["scene"]),
                str(rec["weather"]),
                rec.get("lighting"),
                rec.get("resolution"),
                rec.get("category"),
                int(str(angle).rstrip("°")) if angle is not None else None,
            )
        except KeyError as exc:
            raise AnnotationError(f"{video_id}: metadata is missing {exc.args[0]!r}") from exc

    def to_record(self) -> dict:
        rec = asdict(self)
        del rec["video_id"]
        return rec


def _text(node: ET.Element, path: str) -> str | None:
    el = node.find(path)
    return el.text.strip() if el is not None and el.text is not None else None


def _number(node: ET.Element, path: str, what: str) -> float:
    raw = _text(node, path)
    if raw is None:
        raise AnnotationError(f"missing {what}")
    try:
        return float(raw)
    except ValueError as exc:
        raise AnnotationError(f"{what} is not a number: {raw!r}") from exc


def parse_voc(
    xml_bytes: bytes | str,
    video_id: str = "",
    frame_index: int = 0,
    working_size: tuple[int, int] | None = (640, 480),
) -> Annotation:
    """Read one PASCAL-VOC frame annotation.

    Boxes are rescaled from the ``size`` element to ``working_size``
    (``None`` keeps native coordinates). Unknown elements are ignored.

    Raises:
        AnnotationError: malformed XML, missing coordinates, or inverted boxes.
    """
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        raise AnnotationError(f"malformed VOC XML: {exc}") from exc
    native = None
    if root.find("size") is not None:
        w = _number(root, "size/width", "size/width")
        h = _number(root, "size/height", "size/height")
        if w > 0 and h > 0:
            native = (int(w), int(h))
    sx = sy = 1.0
    if working_size is not None:
        if native is None:
            raise AnnotationError("VOC file has no usable size element; cannot rescale")
        sx, sy = working_size[0] / native[0], working_size[1] / native[1]
    boxes, names = [], []
    for obj in root.findall("object"):
        bb = obj.find("bndbox")
        if bb is None:
            raise AnnotationError("object without bndbox")
        x0, y0, x1, y1 = (_number(bb, k, f"bndbox/{k}") for k in ("xmin", "ymin", "xmax", "ymax"))
        if x1 < x0 or y1 < y0:
            raise AnnotationError(f"inverted box ({x0}, {y0}, {x1}, {y1})")
        boxes.append(BoundingBox(x0 * sx, y0 * sy, x1 * sx, y1 * sy))
        names.append(_text(obj, "name") or "")
    return Annotation(video_id, frame_index, boxes, _text(root, "filename") or "", names, native)


def write_voc(path: str | os.PathLike, filename: str, size: tuple[int, int], boxes: Sequence[BoundingBox], name: str = "object") -> None:
    root = ET.Element("annotation")
    ET.SubElement(root, "filename").text = filename
    sz = ET.SubElement(root, "size")
    ET.SubElement(sz, "width").text = str(size[0])
    ET.SubElement(sz, "height").text = str(size[1])
    ET.SubElement(sz, "depth").text = "1"
    for b in boxes:
        obj = ET.SubElement(root, "object")
        ET.SubElement(obj, "name").text = name
        bb = ET.SubElement(obj, "bndbox")
        for k, v in zip(("xmin", "ymin", "xmax", "ymax"), b.as_list()):
            ET.SubElement(bb, k).text = f"{v:g}"
    ET.indent(root)
    Path(path).write_bytes(ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n")


_TRAILING_INT = re.compile(r"(\d+)$")


def load_annotations(root: str | os.PathLike, working_size: tuple[int, int] | None = (640, 480)) -> list[Annotation]:
    """Load ``<root>/<video_id>/*.xml``.

    The frame index is the trailing integer of each file stem, or the file's
    rank in sorted order when the stem has no digits.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"annotation directory not found: {root}")
    out = []
    for vdir in sorted(p for p in root.iterdir() if p.is_dir()):
        for rank, xml in enumerate(sorted(vdir.glob("*.xml"))):
            m = _TRAILING_INT.search(xml.stem)
            idx = int(m.group(1)) if m else rank
            try:
                out.append(parse_voc(xml.read_bytes(), vdir.name, idx, working_size))
            except AnnotationError as exc:
                raise AnnotationError(f"{xml}: {exc}") from exc
    return out


def load_metadata(root: str | os.PathLike | None) -> dict[str, VideoMeta]:
    """Load ``<root>/<video_id>.json`` sidecars; a missing root yields no metadata."""
    if root is None:
        return {}
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"metadata directory not found: {root}")
    out = {}
    for p in sorted(root.glob("*.json")):
        try:
            rec = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise AnnotationError(f"{p}: invalid JSON ({exc})") from exc
        out[p.stem] = VideoMeta.from_record(p.stem, rec)
    return out


@dataclass
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def match_frame(dets: Sequence[Detection], gts: Sequence[BoundingBox], iou_thr: float = IOU_THRESHOLD) -> MatchCounts:
    """Greedy matching of one frame's detections to its ground truth.

    Detections are visited by descending score; each takes the free GT box it
    overlaps most, provided the IoU is strictly above ``iou_thr``.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].box.xmin, dets[i].box.ymin, i))
    free = list(range(len(gts)))
    tp = 0
    for i in order:
        best, best_j = iou_thr, -1
        for j in free:
            v = iou(dets[i].box, gts[j])
            if v > best:
                best, best_j = v, j
        if best_j >= 0:
            free.remove(best_j)
            tp += 1
    return MatchCounts(tp, len(dets) - tp, len(gts) - tp)


def prf(counts: MatchCounts, beta: float = 1.0) -> tuple[float, float, float]:
    """Precision, recall and the weighted F-measure; empty denominators give 0."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    p = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    r = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    return p, r, f_measure(p, r, beta)


def f_measure(precision: float, recall: float, beta: float = 1.0) -> float:
    b2 = beta * beta
    denom = b2 * precision + recall
    return (1 + b2) * precision * recall / denom if denom > 0 else 0.0


@dataclass
class EvalReport:
    precision: float
    recall: float
    f_measure: float
    tro: float
    counts: MatchCounts
    breakdowns: dict[str, dict[str, "EvalReport"]] = field(default_factory=dict)
    excluded: list[dict] = field(default_factory=list)
    num_videos: int = 0

    def summary_line(self) -> str:
        return f"P={self.precision:.4f} R={self.recall:.4f} F={self.f_measure:.4f} TRO={self.tro:.4f}"

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f_measure": self.f_measure,
            "tro": self.tro,
            "counts": asdict(self.counts),
            "num_videos": self.num_videos,
            "breakdowns": {
                axis: {val: rep.to_dict() for val, rep in sorted(vals.items())}
                for axis, vals in sorted(self.breakdowns.items())
            },
            "excluded": self.excluded,
        }


def gt_incidents(annotations: Iterable[Annotation], fps: float) -> dict[str, list[Incident]]:
    """One incident per video: first to last annotated frame holding a box."""
    spans: dict[str, list[int]] = {}
    for a in annotations:
        spans.setdefault(a.video_id, [])
        if a.boxes:
            spans[a.video_id].append(a.frame_index)
    return {
        vid: ([Incident(vid, min(fr) / fps, max(fr) / fps)] if fr else []) for vid, fr in spans.items()
    }


def incidents_from_detections(dets: Iterable[Detection], fps: float, max_gap_s: float = 0.5) -> dict[str, list[Incident]]:
    raw = [Incident(d.video, d.frame_index / fps, d.frame_index / fps) for d in dets]
    out: dict[str, list[Incident]] = {}
    for inc in merge_intervals(raw, max_gap_s):
        out.setdefault(inc.video_id, []).append(inc)
    return out


def _score_videos(
    videos: Sequence[str],
    dets_by_frame: Mapping[tuple[str, int], list[Detection]],
    gts_by_frame: Mapping[tuple[str, int], list[BoundingBox]],
    pred_inc: Mapping[str, Sequence[Incident]],
    gt_inc: Mapping[str, Sequence[Incident]],
    iou_thr: float,
    beta: float,
) -> EvalReport:
    vids = set(videos)
    keys = sorted(k for k in set(dets_by_frame) | set(gts_by_frame) if k[0] in vids)
    counts = MatchCounts()
    for k in keys:
        counts = counts + match_frame(dets_by_frame.get(k, []), gts_by_frame.get(k, []), iou_thr)
    p, r, f = prf(counts, beta)
    t = tro_dataset({v: pred_inc.get(v, []) for v in vids}, {v: gt_inc.get(v, []) for v in vids})
    return EvalReport(p, r, f, t, counts, num_videos=len(vids))


def evaluate(
    dets: Sequence[Detection],
    annotations: Sequence[Annotation],
    metadata: Mapping[str, VideoMeta] | None = None,
    fps: float = 30.0,
    iou_thr: float = IOU_THRESHOLD,
    beta: float = 1.0,
    incidents: Mapping[str, Sequence[Incident]] | None = None,
) -> EvalReport:
    """Micro-averaged detection scores, dataset TRO and per-metadata breakdowns.

    Predicted incidents default to the merged spans of the detections
    themselves. Detections for videos without annotations are listed in
    ``excluded`` and left out of every score.
    """
    metadata = metadata or {}
    known = sorted({a.video_id for a in annotations})
    known_set = set(known)
    gts_by_frame: dict[tuple[str, int], list[BoundingBox]] = {}
    for a in annotations:
        gts_by_frame.setdefault((a.video_id, a.frame_index), []).extend(a.boxes)
    dets_by_frame: dict[tuple[str, int], list[Detection]] = {}
    excluded: dict[str, int] = {}
    kept = []
    for d in dets:
        if d.video not in known_set:
            excluded[d.video] = excluded.get(d.video, 0) + 1
            continue
        kept.append(d)
        dets_by_frame.setdefault((d.video, d.frame_index), []).append(d)
    if incidents is None:
        pred_inc = incidents_from_detections(kept, fps)
    else:
        pred_inc = {v: list(i) for v, i in incidents.items() if v in known_set}
    gt_inc = gt_incidents(annotations, fps)

    report = _score_videos(known, dets_by_frame, gts_by_frame, pred_inc, gt_inc, iou_thr, beta)
    report.excluded = [{"video": v, "detections": n, "reason": "unknown video"} for v, n in sorted(excluded.items())]
    for axis in BREAKDOWN_AXES:
        groups: dict[str, list[str]] = {}
        for v in known:
            meta = metadata.get(v)
            val = getattr(meta, axis) if meta is not None else None
            groups.setdefault(str(val) if val is not None else "unknown", []).append(v)
        report.breakdowns[axis] = {
            val: _score_videos(vids, dets_by_frame, gts_by_frame, pred_inc, gt_inc, iou_thr, beta)
            for val, vids in groups.items()
        }
    return report


@dataclass
class AreaStats:
    counts: list[int]
    proportions: list[float]  # percent
    median: float | None
    total: int
    labels: tuple[str, ...] = AREA_BIN_LABELS

    def to_dict(self) -> dict:
        return {
            "bins": [
                {"range": lab, "count": c, "proportion_pct": p}
                for lab, c, p in zip(self.labels, self.counts, self.proportions)
            ],
            "median_area": self.median,
            "total": self.total,
        }


def area_histogram(areas: Iterable[float]) -> AreaStats:
    """Histogram of box areas over the (0,25], (25,100], (100,225], (225,400], (400,inf) bins.

    Zero-area boxes fall outside every bin and are not counted.
    """
    a = np.asarray(list(areas), dtype=np.float64)
    a = a[a > 0]
    idx = np.searchsorted(np.asarray(AREA_BIN_EDGES), a, side="left")
    counts = np.bincount(idx, minlength=len(AREA_BIN_EDGES) + 1).tolist()
    total = int(a.size)
    props = [100.0 * c / total if total else 0.0 for c in counts]
    median = float(np.median(a)) if total else None
    return AreaStats(counts, props, median, total)


def area_stats(annotations: Iterable[Annotation]) -> AreaStats:
    return area_histogram(b.area for a in annotations for b in a.boxes)


@dataclass
class SplitReport:
    passed: bool
    violations: list[dict]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "violations": self.violations}


def check_split(
    train: Iterable[VideoMeta], val: Iterable[VideoMeta], test: Iterable[VideoMeta]
) -> SplitReport:
    """Scenes must not be shared across splits, except among rainy-day videos."""
    splits = {"train": list(train), "val": list(val), "test": list(test)}
    scene_splits: dict[str, dict[str, list[str]]] = {}
    for name, metas in splits.items():
        for m in metas:
            if m.weather == "rainy":
                continue
            scene_splits.setdefault(m.scene, {}).setdefault(name, []).append(m.video_id)
    violations = []
    for scene in sorted(scene_splits):
        where = scene_splits[scene]
        if len(where) > 1:
            violations.append(
                {"scene": scene, "splits": sorted(where), "videos": {k: sorted(v) for k, v in sorted(where.items())}}
            )
    return SplitReport(not violations, violations)
