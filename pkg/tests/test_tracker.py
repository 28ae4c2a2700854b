import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fadekit.boxes import BoundingBox
from fadekit.errors import ConfigError
from fadekit.mask_ops import Blob
from fadekit.tracker import FallPhysicsParams, Linker, Track, impact_force, is_falling, link


def blob(cx, cy, half=2.0):
    return Blob(BoundingBox(cx - half, cy - half, cx + half, cy + half), int(4 * half * half), (cx, cy))


def track_from_ys(ys, x=100.0, frames=None):
    frames = frames or list(range(len(ys)))
    return Track(0, list(frames), [blob(x, y) for y in ys], [1.0] * len(ys))


def test_straight_drop_makes_one_track():
    tracks = link([(f, [blob(50, 20 + 10 * f)]) for f in range(5)])
    assert len(tracks) == 1
    assert tracks[0].frames == [0, 1, 2, 3, 4]


def test_parallel_drops_stay_apart():
    frames = [(f, [blob(100, 10 + 3 * f + 0.5 * f * f), blob(400, 10 + 3 * f + 0.5 * f * f)]) for f in range(8)]
    tracks = link(frames)
    assert len(tracks) == 2
    for t in tracks:
        xs = {b.centroid[0] for b in t.blobs}
        assert len(xs) == 1


def test_two_blob_association_matches_exhaustive_oracle():
    # two objects falling side by side 60 px apart, listed in swapped order on odd frames
    frames = []
    for f in range(6):
        a, b = blob(200, 30 + 6 * f + f * f), blob(260, 50 + 5 * f + f * f)
        frames.append((f, [a, b] if f % 2 == 0 else [b, a]))
    tracks = link(frames)
    # oracle: of all per-frame labelings, the cheapest total motion keeps x constant
    best = None
    for perm in itertools.product([0, 1], repeat=5):
        cost = 0.0
        order = [0, 1]
        for f in range(1, 6):
            prev = frames[f - 1][1]
            cur = frames[f][1]
            nxt = order if perm[f - 1] == 0 else order[::-1]
            for k in range(2):
                p, c = prev[order[k]].centroid, cur[nxt[k]].centroid
                cost += math.dist(p, c)
            order = nxt
        best = cost if best is None or cost < best else best
    total = 0.0
    for t in tracks:
        total += sum(math.dist(t.blobs[i].centroid, t.blobs[i + 1].centroid) for i in range(len(t) - 1))
        assert len({b.centroid[0] for b in t.blobs}) == 1
    assert len(tracks) == 2
    assert total == pytest.approx(best)


def test_single_blob_is_not_a_track():
    assert link([(0, [blob(5, 5)])]) == []


def test_gap_is_bridged_once_confirmed():
    ys = {0: 10, 1: 14, 2: 20, 4: 38, 5: 52}
    tracks = link([(f, [blob(80, y)]) for f, y in ys.items()])
    assert len(tracks) == 1 and tracks[0].frames == [0, 1, 2, 4, 5]


def test_tentative_tracks_do_not_bridge_gaps():
    tracks = link([(0, [blob(80, 10)]), (1, [blob(80, 20)]), (3, [blob(80, 45)])])
    assert tracks == []


def test_blobs_are_partitioned():
    rng = np.random.default_rng(3)
    frames = []
    for f in range(30):
        blobs = [blob(float(x), float(y)) for x, y in rng.uniform(0, 300, (4, 2))]
        blobs.append(blob(150, 5 + 4 * f))
        frames.append((f, blobs))
    tracks = link(frames, FallPhysicsParams(min_track_len=2))
    seen = set()
    for t in tracks:
        for f, b in zip(t.frames, t.blobs):
            key = (f, b.centroid)
            assert key not in seen
            seen.add(key)


def test_frames_must_increase():
    lk = Linker()
    lk.step(3, [])
    with pytest.raises(ValueError):
        lk.step(3, [])


def test_is_falling_examples():
    assert is_falling(track_from_ys([0, 10, 25, 45]))
    assert not is_falling(track_from_ys([50, 50, 50, 50]))
    assert not is_falling(track_from_ys([90, 80, 70, 60]))
    assert is_falling(track_from_ys([0, 5, 10, 15]))  # constant velocity is not decelerating
    assert not is_falling(track_from_ys([0, 20, 30, 35]))  # braking


def test_velocity_slope_hand_check():
    t = track_from_ys([0, 10, 25, 45])
    v = np.array(t.vertical_velocities)
    assert v.tolist() == [10, 15, 20]
    assert np.polyfit([0.5, 1.5, 2.5], v, 1)[0] == pytest.approx(5.0)


def test_is_falling_needs_two_points():
    with pytest.raises(ValueError):
        is_falling(track_from_ys([3]))


@settings(max_examples=100)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8), st.floats(-1e3, 1e3))
def test_is_falling_ignores_horizontal_shift(steps, dx):
    ys = np.concatenate([[0.0], np.cumsum(steps)])
    a = track_from_ys(list(ys), x=100.0)
    b = track_from_ys(list(ys), x=100.0 + dx)
    assert is_falling(a) == is_falling(b)


def test_params_validation():
    with pytest.raises(ConfigError):
        FallPhysicsParams(min_track_len=1)
    with pytest.raises(ConfigError):
        FallPhysicsParams(min_down_fraction=0.0)


def test_impact_examples():
    f, kgf = impact_force(0.2, 30, 0.01, 9.8)
    assert f == pytest.approx(0.2 * math.sqrt(588) / 0.01)
    assert f == pytest.approx(485.0, abs=0.1)
    assert kgf == pytest.approx(49.5, abs=0.2)
    assert impact_force(0.2, 0, 0.01)[0] == 0.0
    assert impact_force(1.0, 5, 0.02)[0] == pytest.approx(impact_force(1.0, 5, 0.01)[0] / 2)


@settings(max_examples=100)
@given(st.floats(0.01, 100), st.floats(0.01, 500), st.floats(0.001, 1), st.floats(1.1, 10))
def test_impact_scaling(m, h, dt, k):
    f = impact_force(m, h, dt)[0]
    assert impact_force(m * k, h, dt)[0] == pytest.approx(k * f)
    assert impact_force(m, h * k, dt)[0] == pytest.approx(math.sqrt(k) * f)


@pytest.mark.parametrize("args", [(0, 1, 1), (1, -1, 1), (1, 1, 0)])
def test_impact_bad_input(args):
    with pytest.raises(ValueError):
        impact_force(*args)
