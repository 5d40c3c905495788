"""Match densification through per-patch homographies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig
from .featmap import COARSE, FINE
from .geometry import project_points
from .matchset import MatchSet

STEP = 0.5


@dataclass(frozen=True, eq=False)
class ExpansionGrid:
    """Offsets from ``(-re, -re)`` to ``(re, re)`` in steps of 0.5 fine pixels.

    ``points[a, b] == (-re + 0.5 * b, -re + 0.5 * a)``.
    """

    re: float
    points: np.ndarray
    step: float = STEP

    @property
    def n(self) -> int:
        return self.points.shape[0] * self.points.shape[1]


def expansion_grid(re: float) -> ExpansionGrid:
    twice = 2.0 * re
    if not np.isfinite(re) or re <= 0 or twice != round(twice):
        raise InvalidConfig("re", f"expansion radius must be a positive multiple of 0.5, got {re}")
    k = int(round(2 * twice)) + 1
    ax = -re + STEP * np.arange(k)
    y, x = np.meshgrid(ax, ax, indexing="ij")
    return ExpansionGrid(re=float(re), points=np.stack([x, y], axis=-1))


def point_count(re: float) -> int:
    return int(round(2 * re / STEP + 1)) ** 2


@dataclass(frozen=True, eq=False)
class DenseField:
    """One winning correspondence per quantized source pixel.

    Arrays are sorted by key (row-major over ``(ky, kx)``).
    """

    keys: np.ndarray
    pa: np.ndarray
    pb: np.ndarray
    patch_id: np.ndarray
    match_id: np.ndarray
    distance: np.ndarray
    score: np.ndarray
    n_dropped: int
    image_dims: tuple

    def to_matchset(self) -> MatchSet:
        return MatchSet("dense", self.match_id, self.patch_id, self.pa, self.pb, self.score, self.image_dims)


def densify_field(homographies, patch_meta, re: float, image_dims, quantization: float = 1.0) -> DenseField:
    """Project the expansion grid of every patch and keep, per source pixel, the
    candidate from the patch whose center is nearest (ties: lower patch id).

    ``quantization`` is the overlap cell size in original-resolution pixels.
    """
    if quantization <= 0:
        raise InvalidConfig("quantization", f"must be positive, got {quantization}")
    grid = expansion_grid(re).points.reshape(-1, 2)
    ha, wa, hb, wb = image_dims
    chunks = []
    dropped = 0
    for h, m in zip(homographies, patch_meta):
        c = m.w // 2
        tgt_local = project_points(h, grid + c)
        src = FINE * (grid + np.asarray(m.center_a, dtype=np.float64))
        tgt = FINE * (tgt_local - c + np.asarray(m.center_b, dtype=np.float64))
        ok = (
            (tgt[:, 0] >= 0) & (tgt[:, 0] <= wb - 1) & (tgt[:, 1] >= 0) & (tgt[:, 1] <= hb - 1)
            & (src[:, 0] >= 0) & (src[:, 0] <= wa - 1) & (src[:, 1] >= 0) & (src[:, 1] <= ha - 1)
        )
        dropped += int(np.count_nonzero(~ok))
        src, tgt = src[ok], tgt[ok]
        center = FINE * np.asarray(m.center_a, dtype=np.float64)
        dist = np.linalg.norm(src - center, axis=1)
        n = len(src)
        chunks.append((src, tgt, dist, np.full(n, m.patch_id), np.full(n, m.match_id), np.full(n, m.score)))

    if not chunks or sum(len(ch[0]) for ch in chunks) == 0:
        z2 = np.zeros((0, 2))
        zi = np.zeros(0, dtype=np.int64)
        return DenseField(zi.reshape(0, 2), z2, z2, zi, zi, np.zeros(0), np.zeros(0), dropped, tuple(image_dims))

    src, tgt, dist, pid, mid, score = (np.concatenate(col) for col in zip(*chunks))
    keys = np.rint(src / quantization).astype(np.int64)
    # primary key last; trailing source coordinates make the order total
    order = np.lexsort((src[:, 0], src[:, 1], pid, dist, keys[:, 0], keys[:, 1]))
    keys_s = keys[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = np.any(keys_s[1:] != keys_s[:-1], axis=1)
    sel = order[first]
    return DenseField(
        keys=keys[sel], pa=src[sel], pb=tgt[sel], patch_id=pid[sel], match_id=mid[sel],
        distance=dist[sel], score=score[sel], n_dropped=dropped, image_dims=tuple(image_dims),
    )


def densify_matches(homographies, patch_meta, re: float, image_dims, quantization: float = 1.0) -> MatchSet:
    """Dense match set (``kind="dense"``) at original resolution."""
    return densify_field(homographies, patch_meta, re, image_dims, quantization).to_matchset()


def coverage_report(dense: MatchSet, image_dims, re: float | None = None, patch_centers=None) -> dict:
    """Pixel coverage of a dense match set.

    ``covered`` counts distinct integer source pixels hit by any match.  The
    reference region is the union of the ``8 x 8`` original-resolution tiles
    centered on each patch center (``patch_centers``, original resolution); it
    defaults to the whole of image A.  ``fraction`` is the share of region
    pixels that are covered.
    """
    ha, wa = int(image_dims[0]), int(image_dims[1])
    if len(dense):
        px = np.unique(np.rint(dense.pa).astype(np.int64), axis=0)
        px = px[(px[:, 0] >= 0) & (px[:, 0] < wa) & (px[:, 1] >= 0) & (px[:, 1] < ha)]
    else:
        px = np.zeros((0, 2), dtype=np.int64)

    region = np.zeros((ha, wa), dtype=bool)
    if patch_centers is None:
        region[:] = True
    else:
        half = COARSE // 2
        for cx, cy in patch_centers:
            x0, y0 = int(np.floor(cx)) - half, int(np.floor(cy)) - half
            region[max(y0, 0):max(y0 + COARSE, 0), max(x0, 0):max(x0 + COARSE, 0)] = True
    total = int(region.sum())
    in_region = int(region[px[:, 1], px[:, 0]].sum()) if len(px) else 0
    return {
        "re": re,
        "covered": int(len(px)),
        "covered_in_region": in_region,
        "total": total,
        "fraction": in_region / total if total else 0.0,
    }
