"""4D patch correlation volumes and homography-guided slice lookup."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class CorrelationVolume:
    """``full[i, j, k, l] = relu(<fa(i, j), fb(k, l)>)`` and its pooled companion.

    ``half`` is the stride-2 average pool of ``full`` over ``(k, l)``.  For odd
    ``w`` the last row and column are zero-padded first, so ``half`` has
    ``ceil(w / 2)`` cells per axis and the padded pools still divide by 4.
    """

    full: np.ndarray
    half: np.ndarray

    @property
    def w(self) -> int:
        return self.full.shape[0]


@dataclass(frozen=True, eq=False)
class CorrSlice:
    """``w x w x (2r+1) x (2r+1)`` correlation windows at full and half resolution."""

    values: np.ndarray
    half_values: np.ndarray
    r: int


def avg_pool_half(full: np.ndarray) -> np.ndarray:
    w = full.shape[-1]
    n = (w + 1) // 2
    padded = np.zeros(full.shape[:-2] + (2 * n, 2 * n), dtype=full.dtype)
    padded[..., :w, :w] = full
    # fixed row-major summation order so results are reproducible bit for bit
    total = padded[..., 0::2, 0::2] + padded[..., 0::2, 1::2]
    total = total + padded[..., 1::2, 0::2]
    total = total + padded[..., 1::2, 1::2]
    return total / 4.0


def build_volume(p) -> CorrelationVolume:
    """Correlation volume of a :class:`~homopatch.featmap.PatchPair`."""
    fa = np.asarray(p.fa, dtype=np.float64)
    fb = np.asarray(p.fb, dtype=np.float64)
    w = fa.shape[0]
    d = fa.shape[-1]
    full = fa.reshape(w * w, d) @ fb.reshape(w * w, d).T
    np.maximum(full, 0.0, out=full)
    full = full.reshape(w, w, w, w)
    return CorrelationVolume(full=full, half=avg_pool_half(full))


def _sample_stack(maps: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Bilinear lookup in a stack of 2D maps with zero padding.

    ``maps`` is ``(N, H, W)``, ``pts`` is ``(N, M, 2)`` of ``(x, y)``; returns ``(N, M)``.
    """
    n, h, w = maps.shape
    flat = maps.reshape(n, h * w)
    x = pts[..., 0]
    y = pts[..., 1]
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    rows = np.arange(n)[:, None]
    out = np.zeros(x.shape)
    for dy, dx, wgt in (
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (0, 1, fx * (1.0 - fy)),
        (1, 0, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + dx
        yi = y0 + dy
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        idx = np.where(valid, yi * w + xi, 0)
        out += np.where(valid, flat[rows, idx] * wgt, 0.0)
    return out


def window_offsets(r: int) -> np.ndarray:
    """``(2r+1, 2r+1, 2)`` offsets; ``[a, b] == (b - r, a - r)``."""
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    return np.stack([dx, dy], axis=-1)


def sample_slices(vol: CorrelationVolume, projected, r: int) -> CorrSlice:
    """Sample a ``(2r+1)^2`` window of ``vol`` around every projected grid point.

    For source cell ``(i, j)`` the full-resolution window is read from
    ``vol.full[i, j]`` at ``projected[i, j] + offset``; the half-resolution one
    from ``vol.half[i, j]`` at ``0.5 * projected[i, j] + offset``.
    """
    if r < 1:
        raise ValueError(f"search radius must be >= 1, got {r}")
    projected = np.asarray(projected, dtype=np.float64)
    w = vol.w
    if projected.shape != (w, w, 2):
        raise ValueError(f"projected grid must be ({w}, {w}, 2), got {projected.shape}")
    k = 2 * r + 1
    off = window_offsets(r).reshape(1, k * k, 2)
    centers = projected.reshape(w * w, 1, 2)
    full = _sample_stack(vol.full.reshape(w * w, w, w), centers + off)
    nh = vol.half.shape[-1]
    half = _sample_stack(vol.half.reshape(w * w, nh, nh), 0.5 * centers + off)
    return CorrSlice(values=full.reshape(w, w, k, k), half_values=half.reshape(w, w, k, k), r=r)
