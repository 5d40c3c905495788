"""Correspondence sets and their tab-separated text format.

A file starts with one header line::

    # homopatch-matches v1 kind=fine dims=Ha,Wa,Hb,Wb

followed by one row per match: ``match_id, patch_id, xa, ya, xb, yb, score``
(tab separated, floats with 6 decimals).  All coordinates are at original
image resolution.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

KINDS = ("coarse", "fine", "dense")
_HEADER = re.compile(r"^# homopatch-matches v1 kind=(\w+) dims=(\d+),(\d+),(\d+),(\d+)\s*$")


@dataclass(eq=False)
class MatchSet:
    kind: str
    match_id: np.ndarray
    patch_id: np.ndarray
    pa: np.ndarray
    pb: np.ndarray
    score: np.ndarray
    image_dims: tuple[int, int, int, int]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown match kind {self.kind!r}")
        self.match_id = np.asarray(self.match_id, dtype=np.int64).reshape(-1)
        self.patch_id = np.asarray(self.patch_id, dtype=np.int64).reshape(-1)
        self.pa = np.asarray(self.pa, dtype=np.float64).reshape(-1, 2)
        self.pb = np.asarray(self.pb, dtype=np.float64).reshape(-1, 2)
        self.score = np.asarray(self.score, dtype=np.float64).reshape(-1)
        self.image_dims = tuple(int(x) for x in self.image_dims)
        n = len(self.match_id)
        if not (len(self.patch_id) == len(self.pa) == len(self.pb) == len(self.score) == n):
            raise ValueError("MatchSet columns have inconsistent lengths")

    @classmethod
    def empty(cls, kind: str, image_dims) -> MatchSet:
        return cls(kind, [], [], np.zeros((0, 2)), np.zeros((0, 2)), [], image_dims)

    def __len__(self):
        return len(self.match_id)

    def in_bounds(self) -> np.ndarray:
        """Mask of entries whose both endpoints lie inside ``[0, W-1] x [0, H-1]``."""
        ha, wa, hb, wb = self.image_dims
        return (
            (self.pa[:, 0] >= 0) & (self.pa[:, 0] <= wa - 1)
            & (self.pa[:, 1] >= 0) & (self.pa[:, 1] <= ha - 1)
            & (self.pb[:, 0] >= 0) & (self.pb[:, 0] <= wb - 1)
            & (self.pb[:, 1] >= 0) & (self.pb[:, 1] <= hb - 1)
        )

    def subset(self, mask) -> MatchSet:
        return MatchSet(
            self.kind, self.match_id[mask], self.patch_id[mask], self.pa[mask],
            self.pb[mask], self.score[mask], self.image_dims,
        )

    def to_text(self) -> str:
        dims = ",".join(str(x) for x in self.image_dims)
        lines = [f"# homopatch-matches v1 kind={self.kind} dims={dims}"]
        for k in range(len(self)):
            lines.append(
                f"{self.match_id[k]}\t{self.patch_id[k]}\t"
                f"{self.pa[k, 0]:.6f}\t{self.pa[k, 1]:.6f}\t"
                f"{self.pb[k, 0]:.6f}\t{self.pb[k, 1]:.6f}\t{self.score[k]:.6f}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> MatchSet:
        lines = text.splitlines()
        if not lines:
            raise FormatError("empty match file")
        m = _HEADER.match(lines[0])
        if m is None:
            raise FormatError(f"bad match-file header: {lines[0]!r}")
        kind = m.group(1)
        if kind not in KINDS:
            raise FormatError(f"unknown match kind {kind!r}")
        dims = tuple(int(m.group(i)) for i in range(2, 6))
        rows = []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 7:
                raise FormatError(f"line {lineno}: expected 7 fields, got {len(parts)}")
            try:
                rows.append((int(parts[0]), int(parts[1]), *(float(x) for x in parts[2:])))
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from exc
        if not rows:
            return cls.empty(kind, dims)
        arr = np.array([r[2:] for r in rows], dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise FormatError("non-finite value in match file")
        return cls(
            kind,
            [r[0] for r in rows],
            [r[1] for r in rows],
            arr[:, 0:2],
            arr[:, 2:4],
            arr[:, 4],
            dims,
        )

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path) -> MatchSet:
        return cls.from_text(Path(path).read_text())
