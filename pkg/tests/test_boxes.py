import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from fadekit.boxes import (
    BoundingBox,
    Detection,
    decode_array,
    decode_delta,
    encode_array,
    encode_delta,
    iou,
    iou_matrix,
    nms,
)

coord = st.floats(-50, 50, allow_nan=False)
side = st.floats(0.5, 40, allow_nan=False)


@st.composite
def boxes(draw):
    x, y, w, h = draw(coord), draw(coord), draw(side), draw(side)
    return BoundingBox(x, y, x + w, y + h)


def _det(x0, y0, x1, y1, score):
    return Detection(BoundingBox(x0, y0, x1, y1), score, 0, "v")


def test_iou_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(20, 20, 30, 30)) == 0.0
    assert iou(a, BoundingBox(5, 0, 15, 10)) == pytest.approx(1 / 3)
    assert iou(a, BoundingBox(10, 0, 20, 10)) == 0.0  # touching edges share no area


def test_invalid_box():
    with pytest.raises(ValueError):
        BoundingBox(5, 0, 4, 10)


@settings(max_examples=200)
@given(boxes(), boxes())
def test_iou_properties(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)
    assert iou(a, a) == pytest.approx(1.0)


@settings(max_examples=50)
@given(st.lists(boxes(), min_size=1, max_size=6), st.lists(boxes(), min_size=1, max_size=6))
def test_iou_matrix_matches_scalar(aa, bb):
    m = iou_matrix(np.array([a.as_list() for a in aa]), np.array([b.as_list() for b in bb]))
    for i, a in enumerate(aa):
        for j, b in enumerate(bb):
            assert m[i, j] == pytest.approx(iou(a, b), abs=1e-12)


def test_encode_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert encode_delta(a, a) == (0.0, 0.0, 0.0, 0.0)
    assert encode_delta(a, BoundingBox(5, 0, 15, 10)) == pytest.approx((0.5, 0.0, 0.0, 0.0))
    assert decode_delta((0, 0, 0, 0), a) == a


def test_log2_doubles_width_about_center():
    a = BoundingBox(10, 10, 20, 30)
    b = decode_delta((0, 0, math.log(2), 0), a)
    assert b.as_list() == pytest.approx([5, 10, 25, 30])


def test_decode_clips_to_frame():
    b = decode_delta((0, 0, math.log(4), 0), BoundingBox(0, 0, 10, 10), frame_size=(20, 20))
    assert b.xmin == 0.0 and b.xmax == 20.0


@settings(max_examples=200)
@given(boxes(), boxes())
def test_encode_decode_round_trip(a, t):
    back = decode_delta(encode_delta(a, t), a)
    assert back.as_list() == pytest.approx(t.as_list(), abs=1e-9)


@settings(max_examples=50)
@given(st.lists(st.tuples(boxes(), boxes()), min_size=1, max_size=8))
def test_array_codec_matches_scalar(pairs):
    anchors = np.array([a.as_list() for a, _ in pairs])
    targets = np.array([t.as_list() for _, t in pairs])
    d = encode_array(anchors, targets)
    for row, (a, t) in zip(d, pairs):
        assert row == pytest.approx(encode_delta(a, t), abs=1e-12)
    np.testing.assert_allclose(decode_array(d, anchors), targets, atol=1e-9)


def test_nms_single():
    d = [_det(0, 0, 5, 5, 0.3)]
    assert nms(d, 0.5) == d


def test_nms_duplicate():
    d = [_det(0, 0, 5, 5, 0.8), _det(0, 0, 5, 5, 0.9)]
    assert nms(d, 0.5) == [d[1]]


def test_nms_chain_keeps_ends():
    # A-B and B-C overlap with IoU 1/3, A and C only touch
    a, b, c = _det(0, 0, 10, 10, 0.9), _det(5, 0, 15, 10, 0.8), _det(10, 0, 20, 10, 0.7)
    assert nms([c, b, a], 0.3) == [a, c]
    assert nms([c, b, a], 0.4) == [a, b, c]


def test_nms_tie_break_by_position():
    d = [_det(4, 0, 9, 5, 0.5), _det(0, 3, 5, 8, 0.5), _det(0, 0, 5, 5, 0.5)]
    kept = nms(d, 0.0)
    assert kept[0] is d[2]


def _nms_oracle(dets, thr):
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].box.xmin, dets[i].box.ymin))
    keep = []
    for i in order:
        if all(iou(dets[i].box, dets[k].box) <= thr for k in keep):
            keep.append(i)
    return keep


@settings(max_examples=100)
@given(st.lists(st.tuples(boxes(), st.floats(0, 1)), max_size=12), st.floats(0, 1))
def test_nms_properties(items, thr):
    dets = [Detection(b, s, 0, "v") for b, s in items]
    kept = nms(dets, thr)
    assert [dets.index(k) for k in kept] == _nms_oracle(dets, thr)
    for i, a in enumerate(kept):
        for b in kept[i + 1 :]:
            assert iou(a.box, b.box) <= thr


def test_detection_json_round_trip():
    d = Detection(BoundingBox(1, 2, 3.5, 4), 0.75, 12, "vid")
    rec = json.loads(d.to_json())
    assert rec == {"video": "vid", "frame": 12, "bbox": [1.0, 2.0, 3.5, 4.0], "score": 0.75}
    assert Detection.from_record(rec) == d
