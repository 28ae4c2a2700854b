"""Small-object proposal math: anchor grids, size-adaptive positive mining,
and multi-stage refinement with loadable linear heads.

Anchors are one square prior per feature cell on every pyramid level. A
ground-truth box ``g`` accepts anchors whose IoU reaches

    max(0.20, 0.15 + alpha * log(sqrt(w_g * h_g) / 5))

so tiny objects (side <= 5 px) get the permissive 0.20 floor and the cutoff
rises smoothly with object size.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .boxes import BoundingBox, Detection, boxes_to_array, decode_array, encode_array, iou_matrix, nms_indices
from .errors import ConfigError

THRESHOLD_FLOOR = 0.20
THRESHOLD_CEIL = 0.99
MIN_SIDE = 5.0
IGNORE_BAND = 0.05
DEFAULT_STRIDES = (4, 8, 16, 32, 64)

POSITIVE_NONE = -1  # label for negatives
IGNORE = -2


def dynamic_threshold(w: float, h: float, alpha: float = 0.2, log_base: float | str = "e") -> float:
    """Positive-assignment IoU cutoff for an object of size ``w x h``.

    Args:
        w, h: object width and height in pixels (working resolution).
        alpha: growth rate of the cutoff per log-unit of object side.
        log_base: ``"e"`` (natural log) or a positive number such as 10.
    """
    if w <= 0 or h <= 0:
        raise ValueError("object width and height must be positive")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    ratio = math.sqrt(w * h) / MIN_SIDE
    if log_base == "e" or log_base == math.e:
        lg = math.log(ratio)
    else:
        lg = math.log(ratio) / math.log(float(log_base))
    return min(THRESHOLD_CEIL, max(THRESHOLD_FLOOR, 0.15 + alpha * lg))


@dataclass
class AnchorGrid:
    level: int
    stride: int
    base_scale: float
    anchors: np.ndarray  # (rows * cols, 4), row-major
    rows: int
    cols: int

    def __len__(self) -> int:
        return len(self.anchors)


def generate_anchors(
    frame_w: int, frame_h: int, levels: Sequence[tuple[int, float]] | None = None
) -> list[AnchorGrid]:
    """One square anchor of side ``base_scale`` centred on every cell.

    ``levels`` defaults to strides 4..64 with ``base_scale == stride``.
    The last row/column may be a partial cell.
    """
    if levels is None:
        levels = [(s, float(s)) for s in DEFAULT_STRIDES]
    levels = list(levels)
    if not levels:
        raise ConfigError("at least one anchor level is required")
    grids = []
    for lvl, (stride, scale) in enumerate(levels):
        if stride <= 0 or scale <= 0:
            raise ConfigError(f"invalid anchor level (stride={stride}, scale={scale})")
        cols = math.ceil(frame_w / stride)
        rows = math.ceil(frame_h / stride)
        cx = (np.arange(cols) + 0.5) * stride
        cy = (np.arange(rows) + 0.5) * stride
        gx, gy = np.meshgrid(cx, cy)
        half = scale / 2.0
        anchors = np.stack([gx - half, gy - half, gx + half, gy + half], axis=-1).reshape(-1, 4)
        grids.append(AnchorGrid(lvl, int(stride), float(scale), anchors, rows, cols))
    return grids


def _flatten(anchors) -> np.ndarray:
    if isinstance(anchors, np.ndarray):
        return anchors.reshape(-1, 4).astype(np.float64)
    anchors = list(anchors)
    if anchors and isinstance(anchors[0], AnchorGrid):
        return np.concatenate([g.anchors for g in anchors], axis=0)
    return boxes_to_array(anchors)


@dataclass
class AssignmentResult:
    """``labels[i]`` is the GT index for positives, ``-1`` negative, ``-2`` ignore."""

    labels: np.ndarray
    thresholds: np.ndarray
    max_iou: np.ndarray
    forced: list[int] = field(default_factory=list)  # GT indices that needed the max-IoU rule

    @property
    def positives(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0)

    @property
    def negatives(self) -> np.ndarray:
        return np.flatnonzero(self.labels == POSITIVE_NONE)

    @property
    def ignored(self) -> np.ndarray:
        return np.flatnonzero(self.labels == IGNORE)


def assign_positives(
    anchors, gts: Sequence[BoundingBox], alpha: float = 0.2, log_base: float | str = "e"
) -> AssignmentResult:
    """Label anchors against ground truth with size-adaptive IoU cutoffs.

    An anchor is positive when it reaches the cutoff of at least one GT and is
    given to the qualifying GT it overlaps most. A GT left without positives
    takes its best-overlapping free anchor. Anchors within 0.05 below the
    cutoff of their best GT are ignored; the rest are negative.
    """
    a = _flatten(anchors)
    n = len(a)
    labels = np.full(n, POSITIVE_NONE, dtype=np.int64)
    if not gts:
        return AssignmentResult(labels, np.zeros(0), np.zeros(n))
    g = boxes_to_array(gts)
    thr = np.array([dynamic_threshold(b.width, b.height, alpha, log_base) for b in gts])
    ious = iou_matrix(a, g)  # (N, G)

    qualifies = ious >= thr[None, :]
    masked = np.where(qualifies, ious, -1.0)
    best_q = masked.argmax(axis=1)
    pos = qualifies.any(axis=1)
    labels[pos] = best_q[pos]

    forced = []
    for gi in range(len(gts)):
        if np.any(labels == gi):
            continue
        col = np.where(labels >= 0, -1.0, ious[:, gi])
        j = int(col.argmax())
        if col[j] < 0:  # every anchor already positive; nothing left to force
            continue
        labels[j] = gi
        forced.append(gi)

    best = ious.argmax(axis=1)
    max_iou = ious[np.arange(n), best]
    band = (labels == POSITIVE_NONE) & (max_iou >= thr[best] - IGNORE_BAND) & (max_iou < thr[best])
    labels[band] = IGNORE
    return AssignmentResult(labels, thr, max_iou, forced)


@dataclass
class RefinerStage:
    """Linear box head: ``delta = A @ phi + b`` and score ``clip(gain*s + offset, 0, 1)``.

    ``phi`` is the current box encoded against its original anchor, so it is
    zero at the first stage.
    """

    A: np.ndarray
    b: np.ndarray
    score_w: np.ndarray  # (gain, offset)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64).reshape(4, 4)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(4)
        self.score_w = np.asarray(self.score_w, dtype=np.float64).reshape(2)


@dataclass
class RefinerHeads:
    stages: list[RefinerStage]

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @classmethod
    def identity(cls, num_stages: int = 1) -> "RefinerHeads":
        return cls([RefinerStage(np.zeros((4, 4)), np.zeros(4), [1.0, 0.0]) for _ in range(num_stages)])

    @classmethod
    def from_dict(cls, data: dict) -> "RefinerHeads":
        try:
            stages = [RefinerStage(s["A"], s["b"], s["score_w"]) for s in data["stages"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed heads description: {exc}") from exc
        if not stages:
            raise ConfigError("heads file declares no stages")
        return cls(stages)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RefinerHeads":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "stages": [
                {"A": s.A.ravel().tolist(), "b": s.b.tolist(), "score_w": s.score_w.tolist()} for s in self.stages
            ]
        }


def refine(
    anchors: np.ndarray, scores: np.ndarray, heads: RefinerHeads, stages: int,
    frame_size: tuple[int, int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run ``stages`` refinement steps; returns refined boxes and scores."""
    if stages != heads.num_stages:
        raise ConfigError(f"requested {stages} refinement stages but heads define {heads.num_stages}")
    boxes = anchors.copy()
    scores = np.asarray(scores, dtype=np.float64).copy()
    for stage in heads.stages:
        phi = encode_array(anchors, boxes)
        deltas = phi @ stage.A.T + stage.b
        boxes = decode_array(deltas, boxes, frame_size)
        scores = np.clip(stage.score_w[0] * scores + stage.score_w[1], 0.0, 1.0)
    return boxes, scores


def propose(
    anchors,
    heads: RefinerHeads,
    scores: np.ndarray,
    stages: int,
    nms_thr: float = 0.7,
    top_k: int = 300,
    frame_index: int = 0,
    frame_size: tuple[int, int] | None = None,
    min_score: float | None = None,
) -> list[Detection]:
    """Refine scored anchors, suppress overlaps, and keep the best ``top_k``.

    When ``min_score`` is set, anchors scoring at or below it are dropped
    before refinement.
    """
    a = _flatten(anchors)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if len(scores) != len(a):
        raise ValueError(f"{len(scores)} scores for {len(a)} anchors")
    if np.any((scores < 0) | (scores > 1)):
        raise ValueError("anchor scores must lie in [0, 1]")
    if top_k <= 0:
        if stages != heads.num_stages:
            raise ConfigError(f"requested {stages} refinement stages but heads define {heads.num_stages}")
        return []
    keep = scores > min_score if min_score is not None else np.ones(len(a), dtype=bool)
    boxes, out_scores = refine(a[keep], scores[keep], heads, stages, frame_size)
    valid = (boxes[:, 2] > boxes[:, 0]) & (boxes[:, 3] > boxes[:, 1])
    boxes, out_scores = boxes[valid], out_scores[valid]
    kept = nms_indices(boxes, out_scores, nms_thr)[:top_k]
    return [
        Detection(BoundingBox(*map(float, boxes[i])), float(out_scores[i]), frame_index) for i in kept
    ]


def anchor_coverage(grids: Sequence[AnchorGrid], mask: np.ndarray) -> np.ndarray:
    """Fraction of foreground pixels inside each anchor's cell, all levels concatenated."""
    m = np.asarray(mask, dtype=np.float64)
    h, w = m.shape
    integral = np.zeros((h + 1, w + 1))
    integral[1:, 1:] = m.cumsum(0).cumsum(1)
    out = []
    for g in grids:
        a = g.anchors
        x0 = np.clip(np.floor(a[:, 0]), 0, w).astype(int)
        y0 = np.clip(np.floor(a[:, 1]), 0, h).astype(int)
        x1 = np.clip(np.ceil(a[:, 2]), 0, w).astype(int)
        y1 = np.clip(np.ceil(a[:, 3]), 0, h).astype(int)
        s = integral[y1, x1] - integral[y0, x1] - integral[y1, x0] + integral[y0, x0]
        area = np.maximum((x1 - x0) * (y1 - y0), 1)
        out.append(s / area)
    return np.concatenate(out)
