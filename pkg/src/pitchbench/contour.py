"""Pitch contours and the shared contour CSV format.

The CSV format has the header ``time_s,f0_hz,voiced,score``; unvoiced rows
carry ``f0_hz`` 0. Reference contours, tracker outputs and imported contours
all use it.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContourFormatError, ParseError

CONTOUR_HEADER = ["time_s", "f0_hz", "voiced", "score"]


@dataclass(eq=False)
class PitchContour:
    """Voicing flags, F0 and periodicity score on a uniform frame grid.

    ``f0`` is NaN on unvoiced frames and ``score`` is 0 there. ``filled``
    marks frames whose F0 was extrapolated by :func:`metrics.substitute_vuv`.
    """

    hop: float
    voiced: np.ndarray
    f0: np.ndarray
    score: np.ndarray
    filled: np.ndarray | None = None

    def __post_init__(self):
        voiced = np.asarray(self.voiced, dtype=bool)
        f0 = np.asarray(self.f0, dtype=np.float64).copy()
        score = np.asarray(self.score, dtype=np.float64).copy()
        if not (voiced.shape == f0.shape == score.shape) or voiced.ndim != 1:
            raise ValueError("voiced, f0 and score must be 1-D arrays of equal length")
        if self.hop <= 0:
            raise ValueError("hop must be positive")
        f0[~voiced] = np.nan
        score[~voiced] = 0.0
        if np.any(~np.isfinite(f0[voiced])) or np.any(f0[voiced] <= 0):
            raise ValueError("voiced frames need a finite positive F0")
        self.voiced, self.f0, self.score = voiced, f0, score
        if self.filled is None:
            self.filled = np.zeros(voiced.size, dtype=bool)
        else:
            self.filled = np.asarray(self.filled, dtype=bool)

    def __len__(self):
        return self.voiced.size

    @classmethod
    def unvoiced(cls, n_frames: int, hop: float = 0.010) -> "PitchContour":
        return cls(hop, np.zeros(n_frames, bool), np.full(n_frames, np.nan), np.zeros(n_frames))

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.hop

    def copy(self) -> "PitchContour":
        return PitchContour(self.hop, self.voiced.copy(), self.f0.copy(), self.score.copy(),
                            self.filled.copy())

    def with_f0(self, f0) -> "PitchContour":
        return PitchContour(self.hop, self.voiced, f0, self.score, self.filled)

    def voiced_runs(self) -> list[tuple[int, int]]:
        """Half-open ``(start, stop)`` index pairs of maximal voiced runs."""
        edges = np.diff(np.concatenate([[0], self.voiced.astype(np.int8), [0]]))
        return list(zip(np.flatnonzero(edges == 1).tolist(), np.flatnonzero(edges == -1).tolist()))


def write_contour(path, contour: PitchContour) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CONTOUR_HEADER)
        for t, v, f, s in zip(contour.times, contour.voiced, contour.f0, contour.score):
            writer.writerow([f"{t:.6f}", f"{f:.6f}" if v else "0", int(v), f"{s:.6f}"])


def _parse_rows(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for line_no, row in enumerate(reader, start=1):
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = [h.strip() for h in row]
                missing = {"time_s", "f0_hz"} - set(header)
                if missing:
                    raise ParseError(f"{path}:{line_no}: header lacks {sorted(missing)}", line_no)
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}", line_no)
            record = dict(zip(header, row))
            try:
                t = float(record["time_s"])
                f0 = float(record["f0_hz"])
                voiced = bool(int(record["voiced"])) if "voiced" in record else f0 > 0
                score = float(record["score"]) if "score" in record else float(voiced)
            except ValueError as exc:
                raise ParseError(f"{path}:{line_no}: {exc}", line_no) from None
            if not (math.isfinite(t) and math.isfinite(f0) and f0 >= 0):
                raise ParseError(f"{path}:{line_no}: invalid time or frequency", line_no)
            rows.append((t, f0, voiced and f0 > 0, score))
    if header is None:
        raise ParseError(f"{path}: empty contour file", 1)
    return rows


def read_contour(path, hop: float | None = None) -> PitchContour:
    """Read a contour CSV; the hop is taken from the time column unless given."""
    rows = _parse_rows(path)
    if hop is None:
        hop = _infer_hop(path, rows)
    t, f0, voiced, score = (np.array(col) for col in zip(*rows)) if rows else ([],) * 4
    return PitchContour(hop, np.asarray(voiced, bool), np.asarray(f0, float), np.asarray(score, float))


def _infer_hop(path, rows) -> float:
    if len(rows) < 2:
        return 0.010
    times = np.array([r[0] for r in rows])
    steps = np.diff(times)
    hop = float(np.median(steps))
    if hop <= 0 or np.max(np.abs(steps - hop)) > 1e-4 * max(hop, 1e-3) + 1e-6:
        raise ContourFormatError(f"{path}: time column is not uniformly spaced")
    # Times are written with 6 decimals; snap to the microsecond grid.
    return round(hop, 6)


def decimate_contour(contour: PitchContour, hop: float) -> PitchContour:
    """Keep every N-th frame so the contour lands on a coarser hop."""
    ratio = hop / contour.hop
    step = int(round(ratio))
    if step < 1 or abs(ratio - step) > 1e-6 * ratio:
        raise ContourFormatError(
            f"target hop {hop} s is not an integer multiple of source hop {contour.hop} s"
        )
    if step == 1:
        return contour.copy()
    keep = slice(0, None, step)
    return PitchContour(hop, contour.voiced[keep], contour.f0[keep], contour.score[keep],
                        contour.filled[keep])
