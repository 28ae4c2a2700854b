"""Moving attention map: channel pooling + motion mask -> 7x7 conv -> sigmoid.

Feature maps are (H, W, C) float arrays. The map is

    sigmoid(conv7x7([mean_c(F), max_c(F), M]) + bias)

with zero padding 3 and stride 1, and it reweights every channel of ``F``.
The convolution is a cross-correlation, as in deep-learning frameworks:
``out[y, x] = sum k[ky, kx, c] * in[y + ky - 3, x + kx - 3, c]``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

KERNEL_SIZE = 7
PAD = KERNEL_SIZE // 2
IN_PLANES = 3
_TINY = np.finfo(np.float64).tiny
_BELOW_ONE = np.nextafter(1.0, 0.0)


@dataclass
class AttentionWeights:
    kernel: np.ndarray  # (7, 7, 3), index order (ky, kx, cin)
    bias: float = 0.0

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=np.float64)
        if k.size != KERNEL_SIZE * KERNEL_SIZE * IN_PLANES:
            raise ValueError(f"attention kernel needs {KERNEL_SIZE * KERNEL_SIZE * IN_PLANES} coefficients, got {k.size}")
        self.kernel = k.reshape(KERNEL_SIZE, KERNEL_SIZE, IN_PLANES)
        self.bias = float(self.bias)

    @classmethod
    def zeros(cls, bias: float = 0.0) -> "AttentionWeights":
        return cls(np.zeros((KERNEL_SIZE, KERNEL_SIZE, IN_PLANES)), bias)

    @classmethod
    def random(cls, seed: int = 0, scale: float = 0.1) -> "AttentionWeights":
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, scale, (KERNEL_SIZE, KERNEL_SIZE, IN_PLANES)), float(rng.normal(0.0, scale)))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "AttentionWeights":
        with open(path) as fh:
            data = json.load(fh)
        return cls(np.asarray(data["kernel"], dtype=np.float64), float(data["bias"]))

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            json.dump({"kernel": self.kernel.ravel().tolist(), "bias": self.bias}, fh)


def _as_feature_map(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.ndim == 2:
        f = f[:, :, None]
    if f.ndim != 3 or f.shape[2] < 1:
        raise ValueError(f"feature map must be (H, W, C) with C >= 1, got {f.shape}")
    return f


def channel_pool(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-position mean and max across channels, each (H, W, 1)."""
    f = _as_feature_map(f)
    return f.mean(axis=2, keepdims=True), f.max(axis=2, keepdims=True)


def _area_matrix(n_in: int, n_out: int) -> np.ndarray:
    # row i: overlap of output cell i with each input cell, in units of
    # 1 / n_out input pixels, so entries are integers and rows sum to n_in
    edges_out = np.arange(n_out + 1) * n_in
    edges_in = np.arange(n_in + 1) * n_out
    lo = np.maximum(edges_out[:-1, None], edges_in[None, :-1])
    hi = np.minimum(edges_out[1:, None], edges_in[None, 1:])
    return np.clip(hi - lo, 0, None).astype(np.float64)


def resize_mask(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    """Area-average a binary mask to (height, width, 1) with values in [0, 1]."""
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim == 3:
        m = m[:, :, 0]
    if m.max(initial=0.0) > 1.0:
        m = m / 255.0
    h_in, w_in = m.shape
    if (h_in, w_in) == (height, width):
        return m.copy()[:, :, None]
    out = _area_matrix(h_in, height) @ m @ _area_matrix(w_in, width).T / (h_in * w_in)
    return np.clip(out, 0.0, 1.0)[:, :, None]


def _stack_planes(f: np.ndarray, m_resized: np.ndarray) -> np.ndarray:
    f = _as_feature_map(f)
    m = np.asarray(m_resized, dtype=np.float64)
    if m.ndim == 2:
        m = m[:, :, None]
    if m.shape != (f.shape[0], f.shape[1], 1):
        raise ValueError(f"mask shape {m.shape} does not match feature map {f.shape[:2]}")
    avg, mx = channel_pool(f)
    return np.concatenate([avg, mx, m], axis=2)


def _conv(planes: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    h, w, _ = planes.shape
    padded = np.pad(planes, ((PAD, PAD), (PAD, PAD), (0, 0)))
    out = np.zeros((h, w))
    for ky in range(KERNEL_SIZE):
        for kx in range(KERNEL_SIZE):
            out += padded[ky : ky + h, kx : kx + w, :] @ kernel[ky, kx]
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign to stay finite for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep the open interval once float64 saturates (|z| beyond ~37 or ~745)
    return np.clip(out, _TINY, _BELOW_ONE, out=out)


def compute_map(f: np.ndarray, m_resized: np.ndarray, weights: AttentionWeights) -> np.ndarray:
    """Moving attention map of shape (H, W, 1), values in (0, 1)."""
    planes = _stack_planes(f, m_resized)
    z = _conv(planes, weights.kernel) + weights.bias
    return _sigmoid(z)[:, :, None]


def compute_map_grad(
    f: np.ndarray, m_resized: np.ndarray, weights: AttentionWeights, upstream: np.ndarray | None = None
) -> tuple[np.ndarray, float]:
    """Gradient of ``sum(upstream * MAP)`` w.r.t. the kernel and the bias.

    With ``upstream`` omitted this is the gradient of the map's sum.
    Returns ``(d_kernel (7, 7, 3), d_bias)``.
    """
    planes = _stack_planes(f, m_resized)
    h, w, _ = planes.shape
    s = compute_map(f, m_resized, weights)[:, :, 0]
    g = s * (1.0 - s)
    if upstream is not None:
        g = g * np.asarray(upstream, dtype=np.float64).reshape(h, w)
    padded = np.pad(planes, ((PAD, PAD), (PAD, PAD), (0, 0)))
    d_kernel = np.empty((KERNEL_SIZE, KERNEL_SIZE, IN_PLANES))
    for ky in range(KERNEL_SIZE):
        for kx in range(KERNEL_SIZE):
            d_kernel[ky, kx] = np.tensordot(g, padded[ky : ky + h, kx : kx + w, :], axes=([0, 1], [0, 1]))
    return d_kernel, float(g.sum())


def apply_attention(f: np.ndarray, attention_map: np.ndarray) -> np.ndarray:
    """Multiply every channel of ``f`` by the map."""
    f = _as_feature_map(f)
    a = np.asarray(attention_map, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.shape[:2] != f.shape[:2]:
        raise ValueError(f"attention map shape {a.shape[:2]} does not match feature map {f.shape[:2]}")
    return f * a
