"""Adaptive per-pixel Gaussian mixture background model (MOG2 family).

Each pixel keeps up to ``max_components`` isotropic Gaussians sorted by
weight. The update follows Zivkovic's recursive rules with a complexity
prior that drives unsupported components to zero weight, after which they
are pruned. Foreground is decided against the model *before* it absorbs
the current frame.

The inner loop is compiled with numba; every pixel is independent so the
kernel is a flat loop over ``H*W`` slots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError


@dataclass(frozen=True)
class GmmParams:
    max_components: int = 5
    history: int = 500
    var_threshold: float = 8.0  # below the usual 16: recall-oriented
    var_init: float = 225.0
    var_min: float = 4.0
    var_max: float | None = None  # None -> 5 * var_init
    background_ratio: float = 0.9
    complexity_prior: float = 0.05

    def __post_init__(self):
        if self.var_max is None:
            object.__setattr__(self, "var_max", 5.0 * self.var_init)
        self.validate()

    @property
    def learning_rate(self) -> float:
        return 1.0 / self.history

    def validate(self) -> None:
        if self.max_components < 1:
            raise ConfigError("gmm.max_components must be >= 1")
        if self.history <= 1:
            raise ConfigError("gmm.history must be > 1 so that 0 < alpha < 1")
        if not (self.var_min <= self.var_init <= self.var_max):
            raise ConfigError("gmm variances must satisfy var_min <= var_init <= var_max")
        if self.var_min <= 0:
            raise ConfigError("gmm.var_min must be positive")
        if not (0.0 < self.background_ratio < 1.0):
            raise ConfigError("gmm.background_ratio must lie in (0, 1)")
        if self.complexity_prior < 0:
            raise ConfigError("gmm.complexity_prior must be >= 0")
        if self.var_threshold <= 0:
            raise ConfigError("gmm.var_threshold must be positive")

    def alpha_for(self, frame_count: int) -> float:
        """Learning rate used for the ``frame_count``-th frame (1-based).

        The first ``history // 10`` frames use ``1 / frame_count`` so the
        model bootstraps quickly.
        """
        if frame_count <= self.history // 10:
            return max(1.0 / frame_count, self.learning_rate)
        return self.learning_rate


class GmmState:
    """Mutable mixture state for one video.

    Arrays are flat over pixels: ``weights[p, k]``, ``means[p, k, c]``,
    ``variances[p, k]`` and ``counts[p]`` (live components). Slots beyond
    ``counts[p]`` are zero.
    """

    def __init__(self, params: GmmParams, frame_shape: tuple[int, ...]):
        if len(frame_shape) == 2:
            height, width = frame_shape
            channels = 1
        elif len(frame_shape) == 3:
            height, width, channels = frame_shape
        else:
            raise ConfigError(f"unsupported frame shape {frame_shape!r}")
        if height < 1 or width < 1 or channels not in (1, 3):
            raise ConfigError(f"unsupported frame shape {frame_shape!r}")
        params.validate()
        self.params = params
        self.frame_shape = tuple(frame_shape)
        self.height, self.width, self.channels = height, width, channels
        npix = height * width
        k = params.max_components
        self.weights = np.zeros((npix, k), dtype=np.float64)
        self.means = np.zeros((npix, k, channels), dtype=np.float64)
        self.variances = np.zeros((npix, k), dtype=np.float64)
        self.counts = np.zeros(npix, dtype=np.int64)
        self.frame_count = 0

    @property
    def num_pixels(self) -> int:
        return self.height * self.width

    def pixel(self, y: int, x: int) -> list[tuple[float, np.ndarray, float]]:
        """Live components of one pixel as ``(weight, mean, variance)``."""
        p = y * self.width + x
        n = int(self.counts[p])
        return [
            (float(self.weights[p, k]), self.means[p, k].copy(), float(self.variances[p, k]))
            for k in range(n)
        ]


def gmm_new(params: GmmParams, frame_shape: tuple[int, ...]) -> GmmState:
    return GmmState(params, frame_shape)


@njit(cache=True, nogil=True)
def _apply_kernel(x, weights, means, variances, counts, mask,
                  alpha, var_threshold, var_init, var_min, var_max,
                  bg_ratio, ct):
    npix, kmax = weights.shape
    nch = x.shape[1]
    prune = -alpha * ct
    decay = 1.0 - alpha
    for p in range(npix):
        n = counts[p]
        matched = -1
        cum = 0.0
        is_bg = False
        for k in range(n):
            d2 = 0.0
            for c in range(nch):
                diff = x[p, c] - means[p, k, c]
                d2 += diff * diff
            if d2 < var_threshold * variances[p, k]:
                matched = k
                is_bg = cum < bg_ratio
                break
            cum += weights[p, k]
        mask[p] = 0 if is_bg else 255

        for k in range(n):
            weights[p, k] = decay * weights[p, k] + prune
        if matched >= 0:
            w = weights[p, matched] + alpha
            weights[p, matched] = w
            rho = alpha / w
            if rho > 1.0:
                rho = 1.0
            d2 = 0.0
            for c in range(nch):
                diff = x[p, c] - means[p, matched, c]
                means[p, matched, c] += rho * diff
                d2 += diff * diff
            v = variances[p, matched] + rho * (d2 - variances[p, matched])
            if v < var_min:
                v = var_min
            elif v > var_max:
                v = var_max
            variances[p, matched] = v

        # prune non-positive weights, keeping order
        m = 0
        for k in range(n):
            if weights[p, k] > 0.0:
                if m != k:
                    weights[p, m] = weights[p, k]
                    variances[p, m] = variances[p, k]
                    for c in range(nch):
                        means[p, m, c] = means[p, k, c]
                m += 1
        for k in range(m, n):
            weights[p, k] = 0.0
            variances[p, k] = 0.0
            for c in range(nch):
                means[p, k, c] = 0.0
        n = m

        if matched < 0:
            slot = n if n < kmax else kmax - 1
            weights[p, slot] = alpha
            variances[p, slot] = var_init
            for c in range(nch):
                means[p, slot, c] = x[p, c]
            if n < kmax:
                n += 1

        total = 0.0
        for k in range(n):
            total += weights[p, k]
        if total > 0.0:
            inv = 1.0 / total
            for k in range(n):
                weights[p, k] *= inv

        # insertion sort by weight, descending (stable)
        for k in range(1, n):
            j = k
            while j > 0 and weights[p, j] > weights[p, j - 1]:
                tw = weights[p, j]
                weights[p, j] = weights[p, j - 1]
                weights[p, j - 1] = tw
                tv = variances[p, j]
                variances[p, j] = variances[p, j - 1]
                variances[p, j - 1] = tv
                for c in range(nch):
                    tm = means[p, j, c]
                    means[p, j, c] = means[p, j - 1, c]
                    means[p, j - 1, c] = tm
                j -= 1
        counts[p] = n


def _as_pixels(state: GmmState, pixels: np.ndarray) -> np.ndarray:
    arr = np.asarray(pixels)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.shape != (state.height, state.width, state.channels):
        raise ValueError(
            f"frame shape {np.asarray(pixels).shape} does not match model shape {state.frame_shape}"
        )
    return np.ascontiguousarray(arr.reshape(state.num_pixels, state.channels), dtype=np.float64)


def gmm_apply(state: GmmState, frame) -> np.ndarray:
    """Classify ``frame`` against the model, then update the model with it.

    Args:
        state: mixture state, modified in place.
        frame: ``Frame`` or pixel array of shape (H, W) or (H, W, C).

    Returns:
        Boolean foreground mask of shape (H, W).
    """
    pixels = getattr(frame, "pixels", frame)
    x = _as_pixels(state, pixels)
    state.frame_count += 1
    p = state.params
    alpha = p.alpha_for(state.frame_count)
    mask = np.empty(state.num_pixels, dtype=np.uint8)
    _apply_kernel(
        x, state.weights, state.means, state.variances, state.counts, mask,
        alpha, p.var_threshold, p.var_init, p.var_min, p.var_max,
        p.background_ratio, p.complexity_prior,
    )
    return (mask == 255).reshape(state.height, state.width)


def gmm_background_image(state: GmmState) -> np.ndarray:
    """Mean of the highest-weight component per pixel, rounded half-up to uint8."""
    if state.frame_count < 1:
        raise ValueError("background model has not seen any frame yet")
    top = state.means[:, 0, :]
    img = np.clip(np.floor(top + 0.5), 0, 255).astype(np.uint8)
    if state.channels == 1:
        return img.reshape(state.height, state.width)
    return img.reshape(state.height, state.width, state.channels)
