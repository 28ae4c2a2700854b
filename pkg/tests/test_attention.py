import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fadekit.attention import (
    AttentionWeights,
    apply_attention,
    channel_pool,
    compute_map,
    compute_map_grad,
    resize_mask,
)


def _direct_conv_oracle(f, m, kernel, bias):
    """Pre-sigmoid response by explicit loops over output position and taps."""
    h, w, c = f.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            acc = bias
            for ky in range(7):
                for kx in range(7):
                    yy, xx = y + ky - 3, x + kx - 3
                    if not (0 <= yy < h and 0 <= xx < w):
                        continue
                    vals = f[yy, xx]
                    planes = (sum(vals) / c, max(vals), m[yy, xx])
                    for ci in range(3):
                        acc += kernel[ky, kx, ci] * planes[ci]
            out[y, x] = acc
    return out


def _logit(p):
    return np.log(p) - np.log1p(-p)


def test_pool_single_channel():
    f = np.random.default_rng(0).random((3, 4, 1))
    avg, mx = channel_pool(f)
    np.testing.assert_array_equal(avg, f)
    np.testing.assert_array_equal(mx, f)


def test_pool_two_channels():
    f = np.zeros((1, 1, 2))
    f[0, 0] = [1, 3]
    avg, mx = channel_pool(f)
    assert avg[0, 0, 0] == 2.0 and mx[0, 0, 0] == 3.0


def test_pool_matches_loop():
    f = np.random.default_rng(1).normal(size=(4, 4, 8))
    avg, mx = channel_pool(f)
    for y in range(4):
        for x in range(4):
            assert avg[y, x, 0] == pytest.approx(sum(f[y, x]) / 8)
            assert mx[y, x, 0] == max(f[y, x])


def test_resize_mask_examples():
    m = np.array([[1, 1], [0, 0]], bool)
    assert resize_mask(m, 1, 1)[0, 0, 0] == 0.5
    np.testing.assert_array_equal(resize_mask(m, 2, 2)[:, :, 0], m.astype(float))
    assert (resize_mask(np.ones((7, 9), bool), 3, 4) == 1).all()
    assert (resize_mask(np.full((6, 6), 255, np.uint8), 11, 5) == 1).all()


def test_resize_mask_area_average():
    m = np.random.default_rng(2).random((8, 12)) > 0.5
    out = resize_mask(m, 4, 3)[:, :, 0]
    expect = m.reshape(4, 2, 3, 4).mean(axis=(1, 3))
    np.testing.assert_allclose(out, expect, atol=1e-12)


def test_zero_kernel_gives_half():
    f = np.random.default_rng(3).random((5, 6, 2))
    amap = compute_map(f, np.zeros((5, 6, 1)), AttentionWeights.zeros())
    assert amap.shape == (5, 6, 1)
    assert (amap == 0.5).all()


def test_bias_ln3_gives_three_quarters():
    f = np.random.default_rng(4).random((4, 4, 3))
    amap = compute_map(f, np.ones((4, 4, 1)), AttentionWeights.zeros(bias=math.log(3)))
    np.testing.assert_allclose(amap, 0.75, atol=1e-15)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_map_matches_direct_convolution(seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(9, 9, 4))
    m = (rng.random((9, 9, 1)) > 0.5).astype(float)
    w = AttentionWeights.random(seed, scale=0.3)
    expect = _direct_conv_oracle(f, m[:, :, 0], w.kernel, w.bias)
    got = _logit(compute_map(f, m, w)[:, :, 0])
    np.testing.assert_allclose(got, expect, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(1, 1e6))
def test_map_in_open_unit_interval(seed, scale):
    rng = np.random.default_rng(seed)
    f = rng.normal(0, scale, (6, 7, 3))
    w = AttentionWeights.random(seed, scale=0.05)
    amap = compute_map(f, rng.random((6, 7, 1)), w)
    assert np.isfinite(amap).all()
    assert ((amap > 0) & (amap < 1)).all()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(-3, 3), st.integers(-3, 3))
def test_translation_equivariance(seed, dx, dy):
    rng = np.random.default_rng(seed)
    h, w = 20, 22
    f = rng.normal(size=(h, w, 2))
    m = rng.random((h, w, 1))
    weights = AttentionWeights.random(seed, scale=0.2)

    def shift(a):
        out = np.zeros_like(a)
        ys = slice(max(dy, 0), h + min(dy, 0))
        xs = slice(max(dx, 0), w + min(dx, 0))
        yd = slice(max(-dy, 0), h + min(-dy, 0))
        xd = slice(max(-dx, 0), w + min(-dx, 0))
        out[ys, xs] = a[yd, xd]
        return out

    z = _logit(compute_map(f, m, weights)[:, :, 0])
    zs = _logit(compute_map(shift(f), shift(m), weights)[:, :, 0])
    # compare where neither the original nor the shifted receptive field meets a border
    b = 3 + 3
    inner = (slice(b + max(dy, 0), h - b + min(dy, 0)), slice(b + max(dx, 0), w - b + min(dx, 0)))
    np.testing.assert_allclose(zs[inner], shift(z)[inner], atol=1e-9)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(5, 5, 3))
    m = rng.random((5, 5, 1))
    w = AttentionWeights.random(seed, scale=0.3)
    upstream = rng.normal(size=(5, 5))
    d_kernel, d_bias = compute_map_grad(f, m, w, upstream)

    def loss(kernel, bias):
        return float((compute_map(f, m, AttentionWeights(kernel, bias))[:, :, 0] * upstream).sum())

    eps = 1e-6
    num = np.zeros_like(w.kernel)
    for idx in np.ndindex(*w.kernel.shape):
        kp, km = w.kernel.copy(), w.kernel.copy()
        kp[idx] += eps
        km[idx] -= eps
        num[idx] = (loss(kp, w.bias) - loss(km, w.bias)) / (2 * eps)
    num_b = (loss(w.kernel, w.bias + eps) - loss(w.kernel, w.bias - eps)) / (2 * eps)
    scale = np.abs(num).max()
    np.testing.assert_allclose(d_kernel, num, atol=1e-4 * scale)
    assert d_bias == pytest.approx(num_b, rel=1e-4)


def test_apply_attention():
    rng = np.random.default_rng(5)
    f = rng.normal(size=(6, 5, 4))
    np.testing.assert_array_equal(apply_attention(f, np.ones((6, 5, 1))), f)
    np.testing.assert_array_equal(apply_attention(f, np.full((6, 5, 1), 0.5)), f / 2)
    amap = rng.random((6, 5, 1))
    out = apply_attention(f, amap)
    assert out.shape == f.shape
    for _ in range(10):
        y, x, c = rng.integers(6), rng.integers(5), rng.integers(4)
        assert out[y, x, c] == f[y, x, c] * amap[y, x, 0]


def test_shape_mismatch():
    with pytest.raises(ValueError):
        compute_map(np.zeros((4, 4, 2)), np.zeros((3, 4, 1)), AttentionWeights.zeros())
    with pytest.raises(ValueError):
        apply_attention(np.zeros((4, 4, 2)), np.zeros((4, 3, 1)))


def test_weights_round_trip(tmp_path):
    w = AttentionWeights.random(9)
    w.save(tmp_path / "w.json")
    back = AttentionWeights.load(tmp_path / "w.json")
    np.testing.assert_array_equal(back.kernel, w.kernel)
    assert back.bias == w.bias


def test_weights_wrong_size():
    with pytest.raises(ValueError):
        AttentionWeights(np.zeros(10))


@pytest.mark.parametrize("bias", [-1000.0, -40.0, 40.0, 1000.0])
def test_saturated_logits_stay_inside_unit_interval(bias):
    amap = compute_map(np.zeros((3, 3, 1)), np.zeros((3, 3)), AttentionWeights.zeros(bias))
    assert ((amap > 0) & (amap < 1)).all()
    assert (amap < 0.5).all() == (bias < 0)
