import pytest
from hypothesis import given, settings, strategies as st

from fadekit.events import Incident, incidents_from_tracks, merge_intervals, match_incidents, tro, tro_dataset
from fadekit.tracker import Track
from test_tracker import track_from_ys


def inc(b, e, v="v"):
    return Incident(v, b, e)


def test_track_to_incident():
    t = track_from_ys([float(i * i) for i in range(31)], frames=list(range(30, 61)))
    assert incidents_from_tracks([t], fps=30, video_id="v") == [inc(1.0, 2.0)]


def test_merge_close_incidents():
    assert merge_intervals([inc(2.2, 3.0), inc(1.0, 2.0)]) == [inc(1.0, 3.0)]
    assert merge_intervals([inc(1.0, 2.0), inc(2.6, 3.0)]) == [inc(1.0, 2.0), inc(2.6, 3.0)]
    assert merge_intervals([inc(1.0, 2.0), inc(2.5, 3.0)]) == [inc(1.0, 3.0)]  # gap exactly 0.5


def test_merge_keeps_videos_apart():
    out = merge_intervals([inc(0, 1, "a"), inc(1, 2, "b")])
    assert len(out) == 2


def test_no_falling_tracks():
    flat = track_from_ys([10, 10, 10, 10])
    assert incidents_from_tracks([], 30) == []
    assert incidents_from_tracks([flat], 30) == []


def test_tro_examples():
    assert tro(inc(0, 10), inc(0, 10)) == 1.0
    assert tro(inc(0, 1), inc(2, 3)) == 0.0
    assert tro(inc(0, 10), inc(5, 15)) == pytest.approx(1 / 3)
    assert tro(inc(4, 4), inc(4, 4)) == 1.0
    assert tro(inc(4, 4), inc(0, 10)) == 0.0


def test_tro_needs_same_video():
    with pytest.raises(ValueError):
        tro(inc(0, 1, "a"), inc(0, 1, "b"))


def test_incident_order():
    with pytest.raises(ValueError):
        inc(2, 1)


spans = st.tuples(st.floats(0, 100), st.floats(0.01, 50))


@settings(max_examples=200)
@given(spans, spans, st.floats(-1000, 1000))
def test_tro_properties(a, b, shift):
    x, y = inc(a[0], a[0] + a[1]), inc(b[0], b[0] + b[1])
    s = tro(x, y)
    assert 0.0 <= s <= 1.0
    assert s == pytest.approx(tro(y, x))
    assert tro(x, x) == 1.0
    if s > 0:
        assert s <= min(a[1], b[1]) / max(a[1], b[1]) + 1e-12
    moved = tro(inc(x.begin_s + shift, x.end_s + shift), inc(y.begin_s + shift, y.end_s + shift))
    assert moved == pytest.approx(s, abs=1e-9)


def test_dataset_tro():
    gts = {"a": [inc(0, 10, "a")], "b": [inc(1, 2, "b")]}
    assert tro_dataset(gts, gts) == 1.0
    assert tro_dataset({}, gts) == 0.0
    assert tro_dataset({"a": [inc(5, 15, "a")]}, {"a": [inc(0, 10, "a")]}) == pytest.approx(1 / 3)
    assert tro_dataset({"a": [inc(0, 10, "a")]}, gts) == pytest.approx(0.5)
    assert tro_dataset({}, {}) == 0.0


def test_matching_is_one_to_one():
    preds = [inc(0, 10), inc(1, 9)]
    gts = [inc(0, 10)]
    assert match_incidents(preds, gts) == [(0, 0, 1.0)]
