"""Synthetic scenes with exact ground truth.

Fine features come from a random smooth field: a sum of plane waves whose
frequencies are Gaussian distributed, i.e. a spectral sample of Gaussian
low-pass filtered noise.  Channels come in cosine/sine pairs sharing one
frequency, so every pixel has the same norm and the correlation between two
positions depends only on their offset and is even in it.  The field is
analytic, so map B is the field evaluated at inverse-warped positions and
every coarse match comes with its exact patch-local homography.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig
from .featmap import COARSE, COARSE_TO_FINE, FINE, FeatureMap, PatchPair, cell_center
from .geometry import Homography, four_point_homography, project_points, random_homography, unit_grid
from .matchset import MatchSet

DEFAULT_CHANNELS = 64
DEFAULT_SIGMA = 0.8
DEFAULT_FEATURE_SCALE = 8.0
DEFAULT_COARSE_SCALE = 16.0


@dataclass(frozen=True, eq=False)
class WaveField:
    """Continuous ``R^2 -> R^D`` feature field.

    ``freqs`` is ``(n, 2)`` in radians per pixel; odd ``D`` adds one constant
    channel.  Every value has squared norm ``amp**2 * (n + odd)``.
    """

    freqs: np.ndarray
    phases: np.ndarray
    amp: float
    channels: int

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        arg = pts[..., :1] * self.freqs[:, 0] + pts[..., 1:] * self.freqs[:, 1] + self.phases
        parts = [np.cos(arg), np.sin(arg)]
        if self.channels % 2:
            parts.append(np.ones(pts.shape[:-1] + (1,)))
        return self.amp * np.concatenate(parts, axis=-1)


def random_field(rng: np.random.Generator, channels: int, sigma: float = DEFAULT_SIGMA,
                 scale: float = DEFAULT_FEATURE_SCALE) -> WaveField:
    """Field statistically matching noise blurred by a Gaussian of width ``sigma``.

    Per-pixel squared norm is ``scale``.
    """
    n = channels // 2
    freqs = rng.normal(scale=1.0 / (np.sqrt(2.0) * sigma), size=(n, 2))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return WaveField(freqs, phases, float(np.sqrt(scale / (n + channels % 2))), channels)


def smooth_field(rng: np.random.Generator, h: int, w: int, d: int,
                 sigma: float = DEFAULT_SIGMA, scale: float = DEFAULT_FEATURE_SCALE) -> np.ndarray:
    """Random ``h x w x d`` field with per-pixel norm ``sqrt(scale)``."""
    return random_field(rng, d, sigma, scale)(unit_grid(max(h, w))[:h, :w])


def fine_to_full(h: Homography) -> Homography:
    """Express a fine-level (1/2) homography at original resolution."""
    s = np.diag([2.0, 2.0, 1.0])
    return Homography(s @ h.m @ np.diag([0.5, 0.5, 1.0]))


def local_homography(h_fine: Homography, center_a, center_b, w: int) -> Homography:
    """Fine-level global homography expressed between two patch-local frames."""
    c = w // 2
    ta = Homography.translation(center_a[0] - c, center_a[1] - c)
    tb = Homography.translation(c - center_b[0], c - center_b[1])
    return tb @ h_fine @ ta


def synth_patch_pair(seed, w: int = 9, channels: int = DEFAULT_CHANNELS, max_corner_disp: float = 2.0,
                     sigma: float = DEFAULT_SIGMA, scale: float = DEFAULT_FEATURE_SCALE):
    """One patch pair related by a random homography with corner displacement <= ``max_corner_disp``.

    Returns ``(pair, h_gt)`` with ``fb(h_gt(x)) == fa(x)``.
    """
    if max_corner_disp < 0:
        raise InvalidConfig("max_corner_disp", "must be nonnegative")
    if channels < 1:
        raise InvalidConfig("channels", f"must be >= 1, got {channels}")
    rng = np.random.default_rng(seed)
    h = random_homography(rng, w, max_corner_disp) if max_corner_disp > 0 else Homography.identity()
    field = random_field(rng, channels, sigma, scale)
    grid = unit_grid(w)
    fa = field(grid)
    fb = field(project_points(h.inverse(), grid))
    c = w // 2
    pair = PatchPair(fa.astype(np.float32), fb.astype(np.float32), (c, c), (c, c), match_id=0)
    return pair, h


@dataclass(frozen=True, eq=False)
class SynthScene:
    fine_a: FeatureMap
    fine_b: FeatureMap
    gt_h_per_patch: list
    coarse_matches: MatchSet
    coarse_a: FeatureMap
    coarse_b: FeatureMap
    h_fine: Homography

    @property
    def h_full(self) -> Homography:
        return fine_to_full(self.h_fine)

    @property
    def image_dims(self):
        return self.coarse_matches.image_dims


def synth_scene(seed, height: int, width: int, channels: int = DEFAULT_CHANNELS,
                max_corner_disp: float = 2.0, *, w: int = 9, r: int = 1,
                coarse_channels: int = 64, sigma: float = DEFAULT_SIGMA,
                feature_scale: float = DEFAULT_FEATURE_SCALE,
                coarse_scale: float = DEFAULT_COARSE_SCALE) -> SynthScene:
    """Deterministic synthetic image pair at original size ``height x width``.

    The global warp displaces the four fine-level image corners by random
    vectors of length <= ``max_corner_disp`` (fine pixels).  Coarse
    descriptors are random unit vectors (times ``sqrt(coarse_scale)``); a B
    cell copies the descriptor of the A cell it corresponds to.
    """
    if height % COARSE or width % COARSE or height < 2 * COARSE or width < 2 * COARSE:
        raise InvalidConfig("size", f"height and width must be multiples of {COARSE} and >= {2 * COARSE}")
    if channels < 1:
        raise InvalidConfig("channels", f"must be >= 1, got {channels}")
    if coarse_channels < 1:
        raise InvalidConfig("coarse_channels", f"must be >= 1, got {coarse_channels}")
    if not np.isfinite(max_corner_disp) or max_corner_disp < 0:
        raise InvalidConfig("max_corner_disp", f"must be >= 0, got {max_corner_disp}")
    if max_corner_disp > w // 2 - r:
        raise InvalidConfig("max_corner_disp", f"must be <= w//2 - r = {w // 2 - r}, got {max_corner_disp}")
    if sigma <= 0 or feature_scale <= 0 or coarse_scale <= 0:
        raise InvalidConfig("sigma", "sigma and scales must be positive")

    rng = np.random.default_rng(seed)
    hf, wf = height // FINE, width // FINE
    hc, wc = height // COARSE, width // COARSE

    if max_corner_disp > 0:
        corners = np.array([[0.0, 0.0], [wf - 1.0, 0.0], [0.0, hf - 1.0], [wf - 1.0, hf - 1.0]])
        ang = rng.uniform(0.0, 2.0 * np.pi, size=4)
        rad = max_corner_disp * np.sqrt(rng.uniform(0.0, 1.0, size=4))
        disp = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
        h_fine = four_point_homography(corners, corners + disp)
    else:
        h_fine = Homography.identity()
    h_inv = h_fine.inverse()

    field = random_field(rng, channels, sigma, feature_scale)
    yy, xx = np.mgrid[0:hf, 0:wf].astype(np.float64)
    pix = np.stack([xx, yy], axis=-1)
    fine_a = field(pix)
    fine_b = field(project_points(h_inv, pix))

    # coarse correspondence: cell centers (fine level) mapped and rounded to the nearest cell
    cy, cx = np.mgrid[0:hc, 0:wc]
    cells = np.stack([cx, cy], axis=-1).reshape(-1, 2)
    fwd = np.rint(project_points(h_fine, cells * COARSE_TO_FINE) / COARSE_TO_FINE).astype(np.int64)
    bwd = np.rint(project_points(h_inv, cells * COARSE_TO_FINE) / COARSE_TO_FINE).astype(np.int64)

    def inside(c):
        return (c[:, 0] >= 0) & (c[:, 0] < wc) & (c[:, 1] >= 0) & (c[:, 1] < hc)

    def flat(c):
        return c[:, 1] * wc + c[:, 0]

    desc_a = rng.standard_normal((hc * wc, coarse_channels))
    desc_a /= np.linalg.norm(desc_a, axis=1, keepdims=True)
    desc_b = rng.standard_normal((hc * wc, coarse_channels))
    desc_b /= np.linalg.norm(desc_b, axis=1, keepdims=True)

    fwd_ok = inside(fwd)
    mutual = np.zeros(hc * wc, dtype=bool)
    mutual[fwd_ok] = True
    idx_ok = np.flatnonzero(fwd_ok)
    back_of_fwd = bwd[flat(fwd[idx_ok])]
    mutual[idx_ok] = np.all(back_of_fwd == cells[idx_ok], axis=1)

    src_idx = np.flatnonzero(mutual)
    dst_idx = flat(fwd[src_idx])
    desc_b[dst_idx] = desc_a[src_idx]
    desc_a *= np.sqrt(coarse_scale)
    desc_b *= np.sqrt(coarse_scale)

    pa = np.array([cell_center(cells[i]) for i in src_idx]).reshape(-1, 2)
    pb = np.array([cell_center(fwd[i]) for i in src_idx]).reshape(-1, 2)
    n = len(src_idx)
    matches = MatchSet("coarse", np.arange(n), np.arange(n), pa, pb, np.ones(n), (height, width, height, width))
    gts = [
        local_homography(h_fine, cells[i] * COARSE_TO_FINE, fwd[i] * COARSE_TO_FINE, w)
        for i in src_idx
    ]
    return SynthScene(
        fine_a=FeatureMap(fine_a, FINE),
        fine_b=FeatureMap(fine_b, FINE),
        gt_h_per_patch=gts,
        coarse_matches=matches,
        coarse_a=FeatureMap(desc_a.reshape(hc, wc, coarse_channels), COARSE),
        coarse_b=FeatureMap(desc_b.reshape(hc, wc, coarse_channels), COARSE),
        h_fine=h_fine,
    )
