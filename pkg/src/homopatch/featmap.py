"""Feature maps, their binary file format, patch extraction and bilinear sampling.

Binary layout (little endian)::

    magic   b"HPFM"
    version u32 = 1
    H, W, D u32
    level   u8   (1 = full, 2 = fine, 8 = coarse)
    3 reserved zero bytes
    H*W*D float32, row-major (h, w, d)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidConfig, LevelMismatch

FULL, FINE, COARSE = 1, 2, 8
LEVELS = (FULL, FINE, COARSE)
COARSE_TO_FINE = COARSE // FINE

MAGIC = b"HPFM"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIB3s")


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Dense ``H x W x D`` feature grid at resolution ``1/level``."""

    data: np.ndarray
    level: int

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"feature map must be H x W x D, got shape {data.shape}")
        if self.level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}, got {self.level}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature map contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.data.shape)

    @property
    def image_size(self) -> tuple[int, int]:
        """``(H, W)`` of the original image this map was computed from."""
        h, w, _ = self.data.shape
        return h * self.level, w * self.level


def write_featmap(f: FeatureMap, path) -> None:
    h, w, d = f.dims
    header = _HEADER.pack(MAGIC, VERSION, h, w, d, f.level, b"\0\0\0")
    Path(path).write_bytes(header + f.data.astype("<f4", copy=False).tobytes())


def read_featmap(path) -> FeatureMap:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, h, w, d, level, reserved = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if level not in LEVELS:
        raise FormatError(f"bad level byte {level}")
    if reserved != b"\0\0\0":
        raise FormatError("reserved bytes must be zero")
    n = h * w * d
    payload = raw[_HEADER.size:]
    if len(payload) != 4 * n:
        kind = "truncated" if len(payload) < 4 * n else "trailing bytes"
        raise FormatError(f"{kind}: expected {4 * n} payload bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, d)
    if not np.all(np.isfinite(data)):
        raise FormatError("non-finite values in payload")
    return FeatureMap(data.astype(np.float32), int(level))


def bilinear_sample(f, pts) -> np.ndarray:
    """Bilinearly sample ``f`` at fractional ``(x, y)`` points.

    ``f`` is a FeatureMap or any array whose first two axes are ``(rows, cols)``;
    trailing axes are carried through.  ``pts`` has shape ``(..., 2)``.  Cells
    outside the grid contribute zero.
    """
    arr = f.data if isinstance(f, FeatureMap) else np.asarray(f)
    pts = np.asarray(pts, dtype=np.float64)
    h, w = arr.shape[:2]
    x = pts[..., 0]
    y = pts[..., 1]
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    tail = (1,) * (arr.ndim - 2)

    out = None
    for dy, dx, wgt in (
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (0, 1, fx * (1.0 - fy)),
        (1, 0, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + dx
        yi = y0 + dy
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        vals = arr[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        term = np.where(valid.reshape(valid.shape + tail), vals * wgt.reshape(wgt.shape + tail), 0.0)
        out = term if out is None else out + term
    return out


@dataclass(frozen=True, eq=False)
class PatchPair:
    """Two ``w x w x D`` windows cut around a coarse match (fine-level centers)."""

    fa: np.ndarray
    fb: np.ndarray
    center_a: tuple[int, int]
    center_b: tuple[int, int]
    match_id: int
    patch_id: int = 0
    score: float = 1.0

    def __post_init__(self):
        if self.fa.shape != self.fb.shape or self.fa.ndim != 3:
            raise ValueError("patch features must share shape w x w x D")
        if self.fa.shape[0] != self.fa.shape[1] or self.fa.shape[0] % 2 == 0:
            raise ValueError("patches must be square with odd size")

    @property
    def w(self) -> int:
        return self.fa.shape[0]


def coarse_cell(p) -> tuple[int, int]:
    """Coarse cell ``(x, y)`` containing an original-resolution point."""
    return int(np.floor(p[0] / COARSE)), int(np.floor(p[1] / COARSE))


def cell_center(cell) -> tuple[float, float]:
    """Original-resolution center of a coarse cell."""
    return cell[0] * COARSE + COARSE / 2, cell[1] * COARSE + COARSE / 2


def fine_center(cell) -> tuple[int, int]:
    """Fine-level pixel a coarse cell maps to (no sub-cell offset)."""
    return cell[0] * COARSE_TO_FINE, cell[1] * COARSE_TO_FINE


def _window(arr: np.ndarray, c, half: int):
    x, y = c
    h, w = arr.shape[:2]
    if x - half < 0 or y - half < 0 or x + half >= w or y + half >= h:
        return None
    return arr[y - half:y + half + 1, x - half:x + half + 1]


def extract_patches(fine_a: FeatureMap, fine_b: FeatureMap, coarse_matches, w: int):
    """Cut a ``w x w`` window from each fine map around every coarse match.

    Matches whose window leaves either map are discarded.

    Returns:
        ``(pairs, n_discarded)``; ``pairs[k].patch_id == k``.
    """
    if fine_a.level != FINE or fine_b.level != FINE:
        raise LevelMismatch(f"fine maps must be at level {FINE}, got {fine_a.level}/{fine_b.level}")
    if coarse_matches.kind != "coarse":
        raise LevelMismatch(f"expected coarse matches, got kind={coarse_matches.kind}")
    if w < 1 or w % 2 == 0:
        raise InvalidConfig("w", f"patch size must be odd and positive, got {w}")
    half = w // 2
    pairs = []
    discarded = 0
    for k in range(len(coarse_matches)):
        ca = fine_center(coarse_cell(coarse_matches.pa[k]))
        cb = fine_center(coarse_cell(coarse_matches.pb[k]))
        wa = _window(fine_a.data, ca, half)
        wb = _window(fine_b.data, cb, half)
        if wa is None or wb is None:
            discarded += 1
            continue
        pairs.append(PatchPair(
            fa=wa, fb=wb, center_a=ca, center_b=cb,
            match_id=int(coarse_matches.match_id[k]), patch_id=len(pairs),
            score=float(coarse_matches.score[k]),
        ))
    return pairs, discarded
