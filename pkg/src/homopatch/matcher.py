"""Coarse matching front-end and the coarse-to-fine pipeline.

Coordinate bookkeeping across levels (points are ``(x, y)``):

* coarse cell ``c``          -> original ``8 * c + 4`` (cell center)
* original point ``p``       -> coarse cell ``floor(p / 8)``
* coarse cell ``c``          -> fine pixel ``4 * c``
* fine point ``q``           -> original ``2 * q``
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidConfig, LevelMismatch, PointOutsidePatch
from .featmap import COARSE, FINE, FeatureMap, cell_center, extract_patches
from .geometry import Homography, project
from .matchset import MatchSet
from .refiner import RefinerConfig, refine_batch_results

DEFAULT_THETA_C = 0.2
HOMOGRAPHY_FILE_TAG = "homopatch-homographies v1"


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Dual-softmax match probabilities between two coarse grids.

    ``p`` is ``(Ha/8 * Wa/8, Hb/8 * Wb/8)``; rows index cells of A in
    row-major order.
    """

    p: np.ndarray
    shape_a: tuple[int, int]
    shape_b: tuple[int, int]
    image_dims: tuple[int, int, int, int]

    def cell_a(self, idx) -> tuple[int, int]:
        return int(idx % self.shape_a[1]), int(idx // self.shape_a[1])

    def cell_b(self, idx) -> tuple[int, int]:
        return int(idx % self.shape_b[1]), int(idx // self.shape_b[1])


def dual_softmax(scores: np.ndarray, temperature: float = 1.0):
    """Return ``(p, row_softmax, col_softmax)`` with ``p = row * col``."""
    s = np.asarray(scores, dtype=np.float64) / temperature
    row = np.exp(s - s.max(axis=1, keepdims=True))
    row /= row.sum(axis=1, keepdims=True)
    col = np.exp(s - s.max(axis=0, keepdims=True))
    col /= col.sum(axis=0, keepdims=True)
    return row * col, row, col


def _check_level(f: FeatureMap, level: int, name: str):
    if f.level != level:
        raise LevelMismatch(f"{name} must be at level 1/{level}, got 1/{f.level}")


def mnn_pairs(p: np.ndarray, theta_c: float) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of mutual argmax entries with ``p >= theta_c``."""
    if p.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    nn_ab = p.argmax(axis=1)
    nn_ba = p.argmax(axis=0)
    rows = np.arange(p.shape[0])
    keep = (nn_ba[nn_ab] == rows) & (p[rows, nn_ab] >= theta_c)
    return rows[keep], nn_ab[keep]


def _matchset(sm: ScoreMatrix, rows, cols, kind: str = "coarse") -> MatchSet:
    n = len(rows)
    pa = np.array([cell_center(sm.cell_a(i)) for i in rows]).reshape(-1, 2)
    pb = np.array([cell_center(sm.cell_b(j)) for j in cols]).reshape(-1, 2)
    return MatchSet(kind, np.arange(n), np.arange(n), pa, pb, sm.p[rows, cols], sm.image_dims)


def coarse_match(ca: FeatureMap, cb: FeatureMap, theta_c: float = DEFAULT_THETA_C,
                 temperature: float = 1.0) -> tuple[MatchSet, ScoreMatrix]:
    """Mutual-nearest-neighbour matches of the dual-softmax probabilities above ``theta_c``."""
    _check_level(ca, COARSE, "coarse map A")
    _check_level(cb, COARSE, "coarse map B")
    if ca.dims[2] != cb.dims[2]:
        raise InvalidConfig("channels", f"coarse maps disagree on D: {ca.dims[2]} vs {cb.dims[2]}")
    ha, wa, d = ca.dims
    hb, wb, _ = cb.dims
    a = ca.data.reshape(-1, d).astype(np.float64)
    b = cb.data.reshape(-1, d).astype(np.float64)
    p, _, _ = dual_softmax(a @ b.T, temperature)
    dims = (*ca.image_size, *cb.image_size)
    sm = ScoreMatrix(p, (ha, wa), (hb, wb), dims)
    rows, cols = mnn_pairs(p, theta_c)
    return _matchset(sm, rows, cols), sm


def suppressed_matches(p: ScoreMatrix, mnn: MatchSet, theta_c: float = DEFAULT_THETA_C) -> MatchSet:
    """Row- or column-argmax entries above ``theta_c`` that MNN rejected."""
    probs = p.p
    if probs.size == 0:
        return MatchSet.empty("coarse", p.image_dims)
    cand = set()
    for i, j in enumerate(probs.argmax(axis=1)):
        cand.add((i, int(j)))
    for j, i in enumerate(probs.argmax(axis=0)):
        cand.add((int(i), j))
    taken = set()
    for k in range(len(mnn)):
        ax, ay = (int(v) for v in np.floor(mnn.pa[k] / COARSE))
        bx, by = (int(v) for v in np.floor(mnn.pb[k] / COARSE))
        taken.add((ay * p.shape_a[1] + ax, by * p.shape_b[1] + bx))
    keep = sorted((i, j) for i, j in cand - taken if probs[i, j] >= theta_c)
    rows = np.array([i for i, _ in keep], dtype=np.int64)
    cols = np.array([j for _, j in keep], dtype=np.int64)
    return _matchset(p, rows, cols)


@dataclass(frozen=True)
class PatchMeta:
    """Provenance of one refined patch; centers are fine-level pixels."""

    patch_id: int
    match_id: int
    center_a: tuple[int, int]
    center_b: tuple[int, int]
    w: int
    score: float = 1.0
    degenerate: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["center_a"] = list(self.center_a)
        d["center_b"] = list(self.center_b)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> PatchMeta:
        return cls(
            patch_id=int(d["patch_id"]), match_id=int(d["match_id"]),
            center_a=tuple(int(v) for v in d["center_a"]),
            center_b=tuple(int(v) for v in d["center_b"]),
            w=int(d["w"]), score=float(d.get("score", 1.0)),
            degenerate=bool(d.get("degenerate", False)),
        )


def map_point(h: Homography, p_fine_a, meta: PatchMeta) -> tuple[float, float]:
    """Map any fine-level point of patch A to original-resolution coordinates in image B."""
    c = meta.w // 2
    lx = p_fine_a[0] - meta.center_a[0] + c
    ly = p_fine_a[1] - meta.center_a[1] + c
    if not (0 <= lx <= meta.w - 1 and 0 <= ly <= meta.w - 1):
        raise PointOutsidePatch(f"point {tuple(p_fine_a)} is outside patch {meta.patch_id}")
    qx, qy = project(h, (lx, ly))
    return FINE * (qx - c + meta.center_b[0]), FINE * (qy - c + meta.center_b[1])


@dataclass(eq=False)
class PipelineResult:
    fine: MatchSet
    homographies: list
    patch_meta: list
    coarse: MatchSet
    n_discarded: int = 0

    def __iter__(self):
        return iter((self.fine, self.homographies, self.patch_meta))


def refine_matches(fa: FeatureMap, fb: FeatureMap, coarse: MatchSet, cfg: RefinerConfig,
                   est=None, threads: int = 1) -> PipelineResult:
    """Refine the patch pair around every coarse match; each patch center becomes one fine match."""
    pairs, discarded = extract_patches(fa, fb, coarse, cfg.w)
    results = refine_batch_results(pairs, cfg, est, threads)
    homs, meta, pa, pb = [], [], [], []
    for pair, res in zip(pairs, results):
        homs.append(res.h)
        m = PatchMeta(pair.patch_id, pair.match_id, pair.center_a, pair.center_b,
                      cfg.w, pair.score, res.degenerate)
        meta.append(m)
        pa.append((FINE * pair.center_a[0], FINE * pair.center_a[1]))
        pb.append(map_point(res.h, pair.center_a, m))
    fine = MatchSet(
        "fine",
        [m.match_id for m in meta],
        [m.patch_id for m in meta],
        np.array(pa, dtype=np.float64).reshape(-1, 2),
        np.array(pb, dtype=np.float64).reshape(-1, 2),
        [m.score for m in meta],
        coarse.image_dims,
    )
    return PipelineResult(fine, homs, meta, coarse, discarded)


def run_pipeline(ca: FeatureMap, cb: FeatureMap, fa: FeatureMap, fb: FeatureMap,
                 cfg: RefinerConfig | None = None, theta_c: float = DEFAULT_THETA_C,
                 est=None, threads: int = 1) -> PipelineResult:
    """Full coarse-to-fine run: coarse matching followed by :func:`refine_matches`."""
    cfg = cfg or RefinerConfig()
    _check_level(fa, FINE, "fine map A")
    _check_level(fb, FINE, "fine map B")
    if fa.image_size != ca.image_size or fb.image_size != cb.image_size:
        raise InvalidConfig("dims", "coarse and fine maps describe different image sizes")
    coarse, _ = coarse_match(ca, cb, theta_c)
    return refine_matches(fa, fb, coarse, cfg, est, threads)


def save_homographies(path, homographies, meta, image_dims) -> None:
    """Write per-patch homographies with their provenance as JSON."""
    doc = {
        "format": HOMOGRAPHY_FILE_TAG,
        "image_dims": list(image_dims),
        "patches": [dict(m.to_dict(), **h.to_dict()) for h, m in zip(homographies, meta)],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_homographies(path):
    """Inverse of :func:`save_homographies`; returns ``(homographies, meta, image_dims)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != HOMOGRAPHY_FILE_TAG:
        raise FormatError(f"{path}: not a homography file")
    try:
        homs = [Homography.from_dict(p) for p in doc["patches"]]
        meta = [PatchMeta.from_dict(p) for p in doc["patches"]]
        dims = tuple(int(v) for v in doc["image_dims"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed homography file ({exc})") from exc
    return homs, meta, dims
