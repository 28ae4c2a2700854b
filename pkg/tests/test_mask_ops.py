from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fadekit.mask_ops import connected_components, morph_open


def _erode_oracle(m, r):
    h, w = m.shape
    out = np.zeros_like(m)
    for y in range(h):
        for x in range(w):
            ok = True
            for yy in range(max(0, y - r), min(h, y + r + 1)):
                for xx in range(max(0, x - r), min(w, x + r + 1)):
                    ok = ok and m[yy, xx]
            out[y, x] = ok
    return out


def _dilate_oracle(m, r):
    h, w = m.shape
    out = np.zeros_like(m)
    for y in range(h):
        for x in range(w):
            out[y, x] = m[max(0, y - r) : y + r + 1, max(0, x - r) : x + r + 1].any()
    return out


def _flood_fill_oracle(m):
    """List of pixel sets, one per 8-connected component."""
    h, w = m.shape
    seen = np.zeros_like(m)
    comps = []
    for y in range(h):
        for x in range(w):
            if not m[y, x] or seen[y, x]:
                continue
            q = deque([(y, x)])
            seen[y, x] = True
            pix = set()
            while q:
                cy, cx = q.popleft()
                pix.add((cy, cx))
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < h and 0 <= nx < w and m[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            q.append((ny, nx))
            comps.append(pix)
    return comps


def test_radius_zero_is_identity():
    m = np.random.default_rng(0).random((10, 12)) > 0.5
    assert np.array_equal(morph_open(m, 0), m)


def test_single_pixel_removed():
    m = np.zeros((9, 9), bool)
    m[4, 4] = True
    assert not morph_open(m, 1).any()


def test_square_survives_opening():
    m = np.zeros((12, 12), bool)
    m[3:8, 4:9] = True
    out = morph_open(m, 1)
    assert np.array_equal(out, _dilate_oracle(_erode_oracle(m, 1), 1))
    assert np.array_equal(out, m)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3), st.floats(0.3, 0.9))
def test_open_matches_brute_force(seed, r, density):
    m = np.random.default_rng(seed).random((14, 17)) < density
    out = morph_open(m, r)
    assert np.array_equal(out, _dilate_oracle(_erode_oracle(m, r), r))
    assert not (out & ~m).any()  # anti-extensive


@pytest.mark.parametrize("r", [1, 2, 3])
def test_opening_deletes_blobs_smaller_than_element(r):
    side = 2 * r + 1
    for h, w in [(side - 1, side), (side, side - 1), (1, 4 * side)]:
        m = np.zeros((30, 40), bool)
        m[10 : 10 + h, 10 : 10 + w] = True
        assert not morph_open(m, r).any()


def test_empty_mask():
    assert connected_components(np.zeros((5, 5), bool)) == []


def test_two_squares():
    m = np.zeros((10, 12), bool)
    m[1:4, 1:4] = True
    m[5:8, 7:10] = True
    blobs = connected_components(m)
    assert [b.area for b in blobs] == [9, 9]
    assert [b.box.as_list() for b in blobs] == [[1, 1, 4, 4], [7, 5, 10, 8]]
    assert blobs[0].centroid == (2.5, 2.5)


def test_diagonal_pixels_join():
    m = np.zeros((4, 4), bool)
    m[0, 0] = m[1, 1] = m[2, 2] = True
    blobs = connected_components(m)
    assert len(blobs) == 1
    assert blobs[0].area == 3


def test_min_area_filter():
    m = np.zeros((6, 6), bool)
    m[0, 0] = True
    m[3:5, 3:5] = True
    assert [b.area for b in connected_components(m, min_area=2)] == [4]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.05, 0.6))
def test_labeling_matches_flood_fill(seed, density):
    m = np.random.default_rng(seed).random((64, 64)) < density
    blobs = connected_components(m)
    comps = _flood_fill_oracle(m)
    assert len(blobs) == len(comps)
    assert sum(b.area for b in blobs) == int(m.sum())
    got = sorted(
        (b.area, b.box.as_list(), round(b.centroid[0], 9), round(b.centroid[1], 9)) for b in blobs
    )
    expect = []
    for pix in comps:
        ys = [p[0] for p in pix]
        xs = [p[1] for p in pix]
        box = [float(min(xs)), float(min(ys)), float(max(xs) + 1), float(max(ys) + 1)]
        expect.append((len(pix), box, round(sum(xs) / len(xs) + 0.5, 9), round(sum(ys) / len(ys) + 0.5, 9)))
    assert got == sorted(expect)
