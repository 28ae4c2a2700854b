"""Axis-aligned box geometry: IoU, R-CNN style deltas, greedy NMS.

Areas use continuous coordinates (``width = xmax - xmin``), with no +1
pixel convention.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True, order=True)
class BoundingBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if self.xmax < self.xmin or self.ymax < self.ymin:
            raise ValueError(f"invalid box {self.as_list()}: max < min")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0

    def as_list(self) -> list[float]:
        return [self.xmin, self.ymin, self.xmax, self.ymax]

    def scaled(self, sx: float, sy: float) -> "BoundingBox":
        return BoundingBox(self.xmin * sx, self.ymin * sy, self.xmax * sx, self.ymax * sy)

    def shifted(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.xmin + dx, self.ymin + dy, self.xmax + dx, self.ymax + dy)


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    score: float
    frame_index: int = 0
    video: str = ""

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"detection score {self.score} outside [0, 1]")

    def to_json(self) -> str:
        return json.dumps(
            {"video": self.video, "frame": self.frame_index, "bbox": self.box.as_list(), "score": self.score}
        )

    @classmethod
    def from_record(cls, rec: dict) -> "Detection":
        x0, y0, x1, y1 = (float(v) for v in rec["bbox"])
        return cls(BoundingBox(x0, y0, x1, y1), float(rec["score"]), int(rec["frame"]), str(rec["video"]))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    ih = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    inter = max(iw, 0.0) * max(ih, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def boxes_to_array(boxes: Iterable[BoundingBox]) -> np.ndarray:
    arr = np.array([b.as_list() for b in boxes], dtype=np.float64)
    return arr.reshape(-1, 4)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (N, 4) and (M, 4) box arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def encode_delta(anchor: BoundingBox, target: BoundingBox) -> tuple[float, float, float, float]:
    """(dx, dy, dw, dh) moving ``anchor`` onto ``target``."""
    if anchor.width <= 0 or anchor.height <= 0:
        raise ValueError("anchor must have positive width and height")
    if target.width <= 0 or target.height <= 0:
        raise ValueError("target must have positive width and height")
    ax, ay = anchor.center
    tx, ty = target.center
    return (
        (tx - ax) / anchor.width,
        (ty - ay) / anchor.height,
        math.log(target.width / anchor.width),
        math.log(target.height / anchor.height),
    )


def decode_delta(
    delta: Sequence[float], anchor: BoundingBox, frame_size: tuple[int, int] | None = None
) -> BoundingBox:
    """Inverse of :func:`encode_delta`; clips to ``(width, height)`` when given."""
    dx, dy, dw, dh = delta
    ax, ay = anchor.center
    cx = ax + dx * anchor.width
    cy = ay + dy * anchor.height
    w = anchor.width * math.exp(dw)
    h = anchor.height * math.exp(dh)
    x0, y0, x1, y1 = cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0
    if frame_size is not None:
        fw, fh = frame_size
        x0, x1 = min(max(x0, 0.0), fw), min(max(x1, 0.0), fw)
        y0, y1 = min(max(y0, 0.0), fh), min(max(y1, 0.0), fh)
    return BoundingBox(x0, y0, x1, y1)


def encode_array(anchors: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Vectorized :func:`encode_delta` over (N, 4) arrays."""
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    tw = targets[:, 2] - targets[:, 0]
    th = targets[:, 3] - targets[:, 1]
    out = np.empty((len(anchors), 4))
    out[:, 0] = ((targets[:, 0] + targets[:, 2]) - (anchors[:, 0] + anchors[:, 2])) / 2.0 / aw
    out[:, 1] = ((targets[:, 1] + targets[:, 3]) - (anchors[:, 1] + anchors[:, 3])) / 2.0 / ah
    out[:, 2] = np.log(tw / aw)
    out[:, 3] = np.log(th / ah)
    return out


def decode_array(deltas: np.ndarray, anchors: np.ndarray, frame_size: tuple[int, int] | None = None) -> np.ndarray:
    """Vectorized :func:`decode_delta` over (N, 4) arrays."""
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    cx = (anchors[:, 0] + anchors[:, 2]) / 2.0 + deltas[:, 0] * aw
    cy = (anchors[:, 1] + anchors[:, 3]) / 2.0 + deltas[:, 1] * ah
    w = aw * np.exp(deltas[:, 2])
    h = ah * np.exp(deltas[:, 3])
    out = np.stack([cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0], axis=1)
    if frame_size is not None:
        fw, fh = frame_size
        out[:, [0, 2]] = np.clip(out[:, [0, 2]], 0.0, fw)
        out[:, [1, 3]] = np.clip(out[:, [1, 3]], 0.0, fh)
    return out


def nms_indices(boxes: np.ndarray, scores: np.ndarray, iou_thr: float) -> list[int]:
    """Indices kept by greedy NMS, in keep order.

    Candidates are visited by (score desc, xmin asc, ymin asc); a box is
    dropped when its IoU with an already kept box exceeds ``iou_thr``.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64)
    if len(boxes) == 0:
        return []
    remaining = np.lexsort((boxes[:, 1], boxes[:, 0], -scores))
    keep = []
    while remaining.size:
        i = int(remaining[0])
        keep.append(i)
        rest = remaining[1:]
        overlaps = iou_matrix(boxes[i : i + 1], boxes[rest])[0]
        remaining = rest[overlaps <= iou_thr]
    return keep


def nms(dets: Sequence[Detection], iou_thr: float) -> list[Detection]:
    if not dets:
        return []
    keep = nms_indices(boxes_to_array(d.box for d in dets), np.array([d.score for d in dets]), iou_thr)
    return [dets[i] for i in keep]
