"""Iterative patch-to-patch homography estimation.

One iteration:

1. project the source grid through the current homography;
2. sample correlation windows around the projections;
3. ask the estimator for a residual corner displacement;
4. add it to the displacement cube and rebuild the homography from the corners.

Estimators are plain callables::

    est(slices: CorrSlice, grid, projected, current) -> delta   # (4, 2)

and must be pure.  :class:`SoftArgmaxEstimator` is the deterministic default.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .correlation import CorrelationVolume, CorrSlice, build_volume, sample_slices, window_offsets
from .errors import DegenerateConfiguration, DegenerateProjection, InvalidConfig
from .geometry import (
    Homography,
    corners_to_displacements,
    dlt_from_corners,
    dlt_least_squares,
    project_grid,
    unit_grid,
)


@dataclass(frozen=True)
class RefinerConfig:
    w: int = 9
    r: int = 1
    k_iters: int = 3
    softargmax_temp: float = 1.0
    confidence_floor: float = 0.0

    def __post_init__(self):
        if not isinstance(self.w, (int, np.integer)) or self.w < 3 or self.w % 2 == 0:
            raise InvalidConfig("w", f"patch size must be an odd integer >= 3, got {self.w}")
        if self.r < 1:
            raise InvalidConfig("r", f"search radius must be >= 1, got {self.r}")
        if self.k_iters < 1:
            raise InvalidConfig("k_iters", f"need at least one iteration, got {self.k_iters}")
        if not self.softargmax_temp > 0:
            raise InvalidConfig("softargmax_temp", f"must be positive, got {self.softargmax_temp}")
        if not self.confidence_floor >= 0:
            raise InvalidConfig("confidence_floor", f"must be nonnegative, got {self.confidence_floor}")


def soft_argmax(values: np.ndarray, r: int, temperature: float) -> np.ndarray:
    """Expected ``(dx, dy)`` offset under a softmax over each ``(2r+1)^2`` window.

    ``values`` is ``(..., 2r+1, 2r+1)``; returns ``(..., 2)``.
    """
    k = 2 * r + 1
    lead = values.shape[:-2]
    logits = values.reshape(-1, k * k) / temperature
    logits = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return (p @ window_offsets(r).reshape(k * k, 2)).reshape(lead + (2,))


def window_inside(projected, r: int, w: int) -> np.ndarray:
    """Cells whose whole search window lies inside the target patch."""
    p = np.asarray(projected)
    return np.all((p - r >= 0) & (p + r <= w - 1), axis=-1)


@dataclass(frozen=True)
class SoftArgmaxEstimator:
    """Soft-argmax flow per cell, then a confidence-weighted homography fit.

    Confidence of a cell is the peak of its full-resolution window; cells below
    ``confidence_floor`` get zero weight.
    """

    temperature: float = 1.0
    confidence_floor: float = 0.0

    def __call__(self, slices: CorrSlice, grid, projected, current) -> np.ndarray:
        return default_estimator(
            slices, grid, projected, current,
            temperature=self.temperature, confidence_floor=self.confidence_floor,
        )


def default_estimator(slices, grid, projected, current, temperature=1.0, confidence_floor=0.0):
    w = grid.shape[0]
    vals = slices.values
    delta = soft_argmax(vals, slices.r, temperature)
    conf = vals.reshape(w * w, -1).max(axis=1)
    conf = np.where(conf < confidence_floor, 0.0, conf)
    conf = np.where(window_inside(projected, slices.r, w).reshape(-1), conf, 0.0)
    h_new = dlt_least_squares(grid.reshape(-1, 2), (projected + delta).reshape(-1, 2), conf)
    return corners_to_displacements(h_new, w) - np.asarray(current)


@dataclass
class RefineResult:
    h: Homography
    d: np.ndarray
    trace: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    degenerate: bool = False
    error: str | None = None


def refine_patch(vol: CorrelationVolume, cfg: RefinerConfig, est=None) -> RefineResult:
    """Run ``cfg.k_iters`` refinement iterations starting from the identity.

    ``trace[k]`` is the displacement cube after iteration ``k+1`` and
    ``deltas[k]`` the estimator output that produced it.  If the estimator or
    the DLT degenerates, iteration stops and the last valid homography is
    returned with ``degenerate=True``.
    """
    if vol.w != cfg.w:
        raise InvalidConfig("w", f"volume built for w={vol.w}, config says w={cfg.w}")
    if est is None:
        est = SoftArgmaxEstimator(cfg.softargmax_temp, cfg.confidence_floor)
    grid = unit_grid(cfg.w)
    h = Homography.identity()
    d = np.zeros((4, 2))
    res = RefineResult(h=h, d=d)
    for _ in range(cfg.k_iters):
        try:
            projected = project_grid(h, grid)
            slices = sample_slices(vol, projected, cfg.r)
            delta = np.asarray(est(slices, grid, projected, d), dtype=np.float64).reshape(4, 2)
            d_new = d + delta
            h = dlt_from_corners(d_new, cfg.w)
        except (DegenerateConfiguration, DegenerateProjection) as exc:
            res.degenerate = True
            res.error = str(exc)
            break
        d = d_new
        res.trace.append(d)
        res.deltas.append(delta)
        res.h, res.d = h, d
    return res


def refine_pair(pair, cfg: RefinerConfig, est=None) -> RefineResult:
    return refine_patch(build_volume(pair), cfg, est)


def refine_batch_results(pairs, cfg: RefinerConfig, est=None, threads: int = 1) -> list[RefineResult]:
    ws = {p.w for p in pairs}
    if ws and ws != {cfg.w}:
        raise InvalidConfig("w", f"patch sizes {sorted(ws)} do not match config w={cfg.w}")
    if threads <= 1 or len(pairs) < 2:
        return [refine_pair(p, cfg, est) for p in pairs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda p: refine_pair(p, cfg, est), pairs))


def refine_batch(pairs, cfg: RefinerConfig, est=None, threads: int = 1):
    """Refine independent patch pairs; returns ``(homographies, degenerate_flags)``.

    Output order follows ``pairs`` and does not depend on ``threads``.
    """
    results = refine_batch_results(pairs, cfg, est, threads)
    return [r.h for r in results], [r.degenerate for r in results]
