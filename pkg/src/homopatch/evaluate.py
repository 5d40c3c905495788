"""Matching metrics and the synthetic benchmark."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .densify import densify_matches
from .errors import DegenerateProjection, FormatError, InvalidConfig, MissingGroundTruth
from .geometry import Homography, project_points
from .matcher import coarse_match, refine_matches
from .matchset import MatchSet
from .refiner import RefinerConfig
from .synth import synth_scene

PCK_THRESHOLDS = (1.0, 3.0, 5.0)
AUC_THRESHOLDS = (3.0, 5.0, 10.0)


class HomographyOracle:
    """Ground truth given by an analytic warp at original resolution."""

    def __init__(self, h: Homography):
        self.h = h

    def __call__(self, pts) -> np.ndarray:
        try:
            return project_points(self.h, np.asarray(pts, dtype=np.float64).reshape(-1, 2))
        except DegenerateProjection as exc:
            raise MissingGroundTruth(f"ground truth undefined at match {exc.index}") from exc


class FlowFieldOracle:
    """Ground truth from a dense ``H x W x 2`` array of target coordinates.

    NaN marks pixels without a correspondence.  Queries are bilinearly
    interpolated and fail if any contributing neighbour is missing.
    """

    def __init__(self, targets: np.ndarray):
        targets = np.asarray(targets, dtype=np.float64)
        if targets.ndim != 3 or targets.shape[2] != 2:
            raise FormatError(f"correspondence field must be H x W x 2, got {targets.shape}")
        self.targets = targets

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        h, w = self.targets.shape[:2]
        out = np.empty_like(pts)
        for n, (x, y) in enumerate(pts):
            x0, y0 = int(np.floor(x)), int(np.floor(y))
            fx, fy = x - x0, y - y0
            acc = np.zeros(2)
            for dy, dx, wgt in ((0, 0, (1 - fx) * (1 - fy)), (0, 1, fx * (1 - fy)),
                                (1, 0, (1 - fx) * fy), (1, 1, fx * fy)):
                if wgt == 0:
                    continue
                xi, yi = x0 + dx, y0 + dy
                if not (0 <= xi < w and 0 <= yi < h) or np.any(np.isnan(self.targets[yi, xi])):
                    raise MissingGroundTruth(f"no ground truth at ({x:.3f}, {y:.3f})")
                acc += wgt * self.targets[yi, xi]
            out[n] = acc
        return out


def load_oracle(path):
    """Build an oracle from a JSON homography file or a ``.npy`` correspondence field."""
    path = Path(path)
    if path.suffix == ".npy":
        try:
            return FlowFieldOracle(np.load(path))
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    try:
        h = doc["h_full"] if "h_full" in doc else doc
        return HomographyOracle(Homography.from_dict(h))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: no usable homography ({exc})") from exc


def _key(t) -> str:
    return f"{float(t):g}"


@dataclass
class EvalReport:
    pck: dict
    mean_epe: float | None
    n_matches: int
    auc: dict = field(default_factory=dict)
    runtime_ms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_matches": self.n_matches,
            "mean_epe": self.mean_epe,
            "pck": {_key(k): v for k, v in self.pck.items()},
            "auc": {_key(k): v for k, v in self.auc.items()},
            "runtime_ms": dict(self.runtime_ms),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def match_epe(matches: MatchSet, gt) -> np.ndarray:
    """Per-match Euclidean distance between predicted and ground-truth targets."""
    if len(matches) == 0:
        return np.zeros(0)
    return np.linalg.norm(matches.pb - gt(matches.pa), axis=1)


def pck_from_epe(epe: np.ndarray, thresholds=PCK_THRESHOLDS) -> dict:
    """Percentage of errors strictly below each threshold."""
    if len(epe) == 0:
        return {float(t): 0.0 for t in thresholds}
    return {float(t): 100.0 * float(np.count_nonzero(epe < t)) / len(epe) for t in thresholds}


def epe_pck(matches: MatchSet, gt, thresholds=PCK_THRESHOLDS) -> EvalReport:
    epe = match_epe(matches, gt)
    return EvalReport(
        pck=pck_from_epe(epe, thresholds),
        mean_epe=float(epe.mean()) if len(epe) else None,
        n_matches=len(epe),
    )


def image_corners(image_dims) -> np.ndarray:
    h, w = image_dims[0], image_dims[1]
    return np.array([[0.0, 0.0], [w - 1.0, 0.0], [0.0, h - 1.0], [w - 1.0, h - 1.0]])


def corner_error(h_est: Homography, h_gt: Homography, image_dims) -> float:
    """Mean distance between the image corners warped by each homography."""
    c = image_corners(image_dims)
    return float(np.linalg.norm(project_points(h_est, c) - project_points(h_gt, c), axis=1).mean())


def error_auc(errors, thresholds=AUC_THRESHOLDS) -> dict:
    """Area under the recall-vs-error curve up to each threshold, in percent.

    Follows the common SuperGlue/LoFTR protocol: recall is interpolated
    linearly between the sorted errors (with an anchor at error 0) and the
    area is normalized by the threshold.
    """
    errors = np.sort(np.asarray(errors, dtype=np.float64).reshape(-1))
    if len(errors) == 0:
        return {float(t): 0.0 for t in thresholds}
    e = np.concatenate([[0.0], errors])
    rec = np.linspace(0.0, 1.0, len(e))
    out = {}
    for t in thresholds:
        last = int(np.searchsorted(e, t))
        x = np.concatenate([e[:last], [t]])
        y = np.concatenate([rec[:last], [rec[last - 1]]])
        out[float(t)] = 100.0 * float(np.trapezoid(y, x)) / t
    return out


def corner_auc(h_est, h_gt, image_dims, thresholds=AUC_THRESHOLDS) -> dict:
    """Corner-error AUC over one pair or aligned sequences of homographies."""
    if isinstance(h_est, Homography):
        h_est, h_gt = [h_est], [h_gt]
    if len(h_est) != len(h_gt):
        raise ValueError("estimated and ground-truth homography lists differ in length")
    if image_dims and np.ndim(image_dims[0]) == 0:
        dims = [image_dims] * len(h_est)
    else:
        dims = list(image_dims)
    errs = [corner_error(a, b, d) for a, b, d in zip(h_est, h_gt, dims)]
    return error_auc(errs, thresholds)


def fine_loss(pred: MatchSet, gt, patch_w: int, scale: float = 2.0) -> float:
    """Mean squared L2 distance between predicted and true targets in normalized patch units.

    Both points are expressed relative to the target patch center and divided by
    ``patch_w // 2`` fine pixels (``scale`` converts original to fine
    resolution); the center offset cancels in the difference.
    """
    if pred.kind not in ("fine", "dense"):
        raise ValueError(f"fine_loss needs fine or dense matches, got {pred.kind}")
    if len(pred) == 0:
        return 0.0
    half = patch_w // 2
    diff = (pred.pb - gt(pred.pa)) / scale / half
    return float(np.mean(np.sum(diff * diff, axis=1)))


@dataclass
class BenchRow:
    config: str
    pck: dict
    mean_epe: float | None
    runtime_ms: float
    n_matches: int
    dense_epe: float | None = None

    def tsv(self) -> str:
        def f(v):
            return "nan" if v is None else f"{v:.4f}"
        return "\t".join([self.config, f(self.pck[1.0]), f(self.pck[3.0]), f(self.pck[5.0]),
                          f(self.mean_epe), f"{self.runtime_ms:.3f}"])


BENCH_COLUMNS = ("config", "pck@1", "pck@3", "pck@5", "mean_epe", "runtime_ms")


def bench_table(rows) -> str:
    return "\t".join(BENCH_COLUMNS) + "\n" + "".join(r.tsv() + "\n" for r in rows)


def parse_config_triplet(s: str):
    try:
        w, r, k = (int(v) for v in s.split("/"))
    except ValueError as exc:
        raise InvalidConfig("configs", f"expected w/r/K, got {s!r}") from exc
    return RefinerConfig(w=w, r=r, k_iters=k)


def run_benchmark(seeds, configs, *, size=(64, 64), channels=64, max_corner_disp=2.0,
                  theta_c=0.2, re=2.0, threads=1) -> list[BenchRow]:
    """Evaluate each refiner config on the same synthetic scenes.

    Args:
        seeds: iterable of scene seeds.
        configs: RefinerConfig instances or ``"w/r/K"`` strings.

    Scenes are generated once per seed (validated for the default 9/1 search
    range) and shared by all configs.
    """
    configs = [parse_config_triplet(c) if isinstance(c, str) else c for c in configs]
    if not configs:
        raise InvalidConfig("configs", "at least one config is required")
    scenes = []
    for s in seeds:
        sc = synth_scene(s, size[0], size[1], channels, max_corner_disp)
        coarse, _ = coarse_match(sc.coarse_a, sc.coarse_b, theta_c)
        scenes.append((sc, coarse))
    rows = []
    for cfg in configs:
        epes, dense_epes, elapsed = [], [], 0.0
        for sc, coarse in scenes:
            t0 = time.perf_counter()
            res = refine_matches(sc.fine_a, sc.fine_b, coarse, cfg, threads=threads)
            elapsed += time.perf_counter() - t0
            oracle = HomographyOracle(sc.h_full)
            epes.append(match_epe(res.fine, oracle))
            dense = densify_matches(res.homographies, res.patch_meta, re, sc.image_dims)
            dense_epes.append(match_epe(dense, oracle))
        epe = np.concatenate(epes) if epes else np.zeros(0)
        depe = np.concatenate(dense_epes) if dense_epes else np.zeros(0)
        rows.append(BenchRow(
            config=f"{cfg.w}/{cfg.r}/{cfg.k_iters}",
            pck=pck_from_epe(epe, PCK_THRESHOLDS),
            mean_epe=float(epe.mean()) if len(epe) else None,
            runtime_ms=1000.0 * elapsed / max(len(scenes), 1),
            n_matches=len(epe),
            dense_epe=float(depe.mean()) if len(depe) else None,
        ))
    return rows
