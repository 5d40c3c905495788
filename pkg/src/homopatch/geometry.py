"""Projective-geometry core: homographies, corner displacements and DLT solvers.

Coordinates are ``(u, v) = (x, y) = (column, row)`` in patch-local pixels.  A
displacement cube is a ``(4, 2)`` array holding the corner displacements in the
fixed order top-left, top-right, bottom-left, bottom-right.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, DegenerateProjection

DET_EPS = 1e-12
DEN_EPS = 1e-12
COLLINEAR_EPS = 1e-9
# smallest-but-one singular value relative to the largest; below this the DLT
# null space is not one-dimensional
RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Homography:
    """A 3x3 projective transform normalized so that ``m[2, 2] == 1``."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DegenerateConfiguration("homography has non-finite entries")
        if abs(m[2, 2]) < DEN_EPS:
            raise DegenerateConfiguration("homography cannot be normalized (m[2, 2] ~ 0)")
        m = m / m[2, 2]
        m[2, 2] = 1.0
        if abs(np.linalg.det(m)) <= DET_EPS:
            raise DegenerateConfiguration("homography is singular")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> Homography:
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> Homography:
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]))

    def inverse(self) -> Homography:
        return Homography(np.linalg.inv(self.m))

    def __matmul__(self, other: Homography) -> Homography:
        """Composition: ``(a @ b)`` applies ``b`` first, then ``a``."""
        return Homography(self.m @ other.m)

    def __eq__(self, other):
        return isinstance(other, Homography) and np.array_equal(self.m, other.m)

    def __hash__(self):
        return hash(self.m.tobytes())

    def __repr__(self):
        return f"Homography({self.m.tolist()!r})"

    def to_dict(self) -> dict:
        return {"m": self.m.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Homography:
        return cls(np.asarray(d["m"], dtype=np.float64))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> Homography:
        return cls.from_dict(json.loads(s))


def project_points(h: Homography, pts) -> np.ndarray:
    """Project an ``(..., 2)`` array of points.

    Raises:
        DegenerateProjection: if any denominator is below ``DEN_EPS``; the
            exception's ``index`` is the multi-index of the first offender.
    """
    pts = np.asarray(pts, dtype=np.float64)
    m = h.m
    u = pts[..., 0]
    v = pts[..., 1]
    den = m[2, 0] * u + m[2, 1] * v + m[2, 2]
    bad = np.abs(den) <= DEN_EPS
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DegenerateProjection("point maps to infinity", index=idx if idx else None)
    out = np.empty(pts.shape, dtype=np.float64)
    out[..., 0] = (m[0, 0] * u + m[0, 1] * v + m[0, 2]) / den
    out[..., 1] = (m[1, 0] * u + m[1, 1] * v + m[1, 2]) / den
    return out


def project(h: Homography, p) -> tuple[float, float]:
    """Project a single point ``(u, v)``."""
    q = project_points(h, np.asarray(p, dtype=np.float64).reshape(2))
    return float(q[0]), float(q[1])


def unit_grid(w: int) -> np.ndarray:
    """The ``(w, w, 2)`` patch grid with ``grid[i, j] == (j, i)``."""
    v, u = np.mgrid[0:w, 0:w].astype(np.float64)
    return np.stack([u, v], axis=-1)


def project_grid(h: Homography, grid) -> np.ndarray:
    """Elementwise projection of a coordinate grid; output has the input's shape."""
    return project_points(h, grid)


def patch_corners(w: int) -> np.ndarray:
    """Source corners TL, TR, BL, BR of a ``w``-pixel patch."""
    e = float(w - 1)
    return np.array([[0.0, 0.0], [e, 0.0], [0.0, e], [e, e]])


def _normalizing_transform(pts: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Similarity moving the (weighted) centroid to 0 and mean distance to sqrt(2)."""
    if weights is None:
        weights = np.ones(len(pts))
    wsum = weights.sum()
    c = (weights[:, None] * pts).sum(axis=0) / wsum
    d = (weights * np.linalg.norm(pts - c, axis=1)).sum() / wsum
    if d < 1e-12:
        raise DegenerateConfiguration("points are coincident")
    s = np.sqrt(2.0) / d
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _apply(t: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return pts @ t[:2, :2].T + t[:2, 2]


def _check_general_position(pts: np.ndarray) -> None:
    for a, b, c in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        e1 = pts[b] - pts[a]
        e2 = pts[c] - pts[a]
        if abs(e1[0] * e2[1] - e1[1] * e2[0]) < COLLINEAR_EPS:
            raise DegenerateConfiguration(f"corners {a}, {b}, {c} are collinear")


def _denormalize(hn: np.ndarray, t_src: np.ndarray, t_dst: np.ndarray) -> Homography:
    m = np.linalg.solve(t_dst, hn @ t_src)
    if abs(m[2, 2]) < DEN_EPS:
        raise DegenerateConfiguration("recovered homography has m[2, 2] ~ 0")
    return Homography(m)


def four_point_homography(src, dst) -> Homography:
    """Exact homography through 4 correspondences (normalized 8x8 solve)."""
    src = np.asarray(src, dtype=np.float64).reshape(4, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(4, 2)
    t_src = _normalizing_transform(src)
    t_dst = _normalizing_transform(dst)
    xs = _apply(t_src, src)
    xd = _apply(t_dst, dst)
    _check_general_position(xs)
    _check_general_position(xd)

    a = np.zeros((8, 8))
    b = np.empty(8)
    x, y = xs[:, 0], xs[:, 1]
    xp, yp = xd[:, 0], xd[:, 1]
    a[0::2, 0] = x
    a[0::2, 1] = y
    a[0::2, 2] = 1.0
    a[0::2, 6] = -x * xp
    a[0::2, 7] = -y * xp
    a[1::2, 3] = x
    a[1::2, 4] = y
    a[1::2, 5] = 1.0
    a[1::2, 6] = -x * yp
    a[1::2, 7] = -y * yp
    b[0::2] = xp
    b[1::2] = yp
    try:
        h = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateConfiguration("4-point system is singular") from exc
    if not np.all(np.isfinite(h)):
        raise DegenerateConfiguration("4-point system is singular")
    return _denormalize(np.append(h, 1.0).reshape(3, 3), t_src, t_dst)


def dlt_from_corners(d, w: int) -> Homography:
    """Homography moving each patch corner by its displacement.

    Args:
        d: ``(4, 2)`` displacement cube (TL, TR, BL, BR).
        w: patch size in pixels.
    """
    src = patch_corners(w)
    return four_point_homography(src, src + np.asarray(d, dtype=np.float64).reshape(4, 2))


def corners_to_displacements(h: Homography, w: int) -> np.ndarray:
    """Inverse of :func:`dlt_from_corners`."""
    src = patch_corners(w)
    return project_points(h, src) - src


def dlt_least_squares(src, dst, weights=None) -> Homography:
    """Weighted algebraic-error DLT over ``N >= 4`` correspondences.

    Rows of the DLT system are scaled by ``sqrt(weight)``, so zero-weight
    correspondences are ignored entirely.  Hartley normalization uses the
    weighted centroid and mean distance, which keeps the result invariant to a
    global rescaling of the weights.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if src.shape != dst.shape:
        raise ValueError(f"src/dst shape mismatch: {src.shape} vs {dst.shape}")
    if weights is None:
        weights = np.ones(len(src))
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.shape[0] != src.shape[0]:
        raise ValueError("one weight per correspondence is required")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be finite and nonnegative")
    keep = weights > 0
    if np.count_nonzero(keep) < 4:
        raise DegenerateConfiguration(
            f"need >= 4 positively weighted correspondences, got {np.count_nonzero(keep)}"
        )
    src, dst, weights = src[keep], dst[keep], weights[keep]

    t_src = _normalizing_transform(src, weights)
    t_dst = _normalizing_transform(dst, weights)
    xs = _apply(t_src, src)
    xd = _apply(t_dst, dst)
    n = len(xs)
    sw = np.sqrt(weights)
    x, y = xs[:, 0], xs[:, 1]
    xp, yp = xd[:, 0], xd[:, 1]
    one = np.ones(n)
    zero = np.zeros(n)
    r1 = np.stack([x, y, one, zero, zero, zero, -xp * x, -xp * y, -xp], axis=1)
    r2 = np.stack([zero, zero, zero, x, y, one, -yp * x, -yp * y, -yp], axis=1)
    a = np.empty((2 * n, 9))
    a[0::2] = r1 * sw[:, None]
    a[1::2] = r2 * sw[:, None]

    _, s, vt = np.linalg.svd(a, full_matrices=True)
    s = np.concatenate([s, np.zeros(9 - len(s))]) if len(s) < 9 else s
    if s[7] <= RANK_TOL * s[0]:
        raise DegenerateConfiguration("DLT system is rank deficient")
    return _denormalize(vt[-1].reshape(3, 3), t_src, t_dst)


def random_homography(rng: np.random.Generator, w: int, max_disp: float) -> Homography:
    """Homography whose corner displacements are drawn uniformly from a disc of radius ``max_disp``."""
    ang = rng.uniform(0.0, 2.0 * np.pi, size=4)
    rad = max_disp * np.sqrt(rng.uniform(0.0, 1.0, size=4))
    d = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)
    return dlt_from_corners(d, w)
