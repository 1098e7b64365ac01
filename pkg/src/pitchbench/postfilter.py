"""Contour post-processing that repairs sudden F0 jumps.

All work happens on log2-F0 inside voiced runs; voicing flags are never
touched. Three passes are applied until the contour stops changing:

1. spike repair: short pieces that jump away from both neighbours are
   moved back by whole octaves, or interpolated if that is not enough;
2. register snap: whole voiced runs sitting an octave away from the global
   median are shifted by whole octaves;
3. conditional median: a frame further than ``median_tolerance`` cents from
   its windowed median is replaced by that median.

The median pass only rewrites outliers, so smooth vibrato passes through
unchanged and the result is a fixed point (``postprocess`` is idempotent).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contour import PitchContour

REGISTER_SNAP_CENTS = 1150.0
MAX_ROUNDS = 20


@dataclass(frozen=True)
class PostFilterConfig:
    jump_threshold: float = 600.0
    max_spike_duration: float = 0.1
    median_window: int = 5
    octave_snap: bool = True
    median_tolerance: float = 50.0

    def __post_init__(self):
        if not self.jump_threshold > 0:
            raise ValueError("jump_threshold must be positive")
        if self.max_spike_duration < 0:
            raise ValueError("max_spike_duration must be non-negative")
        if self.median_window < 1 or self.median_window % 2 == 0:
            raise ValueError("median_window must be odd and >= 1")
        if self.median_tolerance < 0:
            raise ValueError("median_tolerance must be non-negative")


def _pieces(x: np.ndarray, jump: float) -> list[list[int]]:
    """Split a run at consecutive steps of at least ``jump`` octaves."""
    cuts = np.flatnonzero(np.abs(np.diff(x)) >= jump) + 1
    bounds = np.concatenate([[0], cuts, [x.size]])
    return [[int(a), int(b)] for a, b in zip(bounds[:-1], bounds[1:])]


def _repair_spikes(x: np.ndarray, jump: float, max_len: int, octave_snap: bool) -> np.ndarray:
    """Repair short pieces that jump away from both neighbours.

    A piece is only treated as a spike when it lies further than its flanks
    from the local median (the run within ``3 * max_len`` frames of the
    piece), so in a stretch of dense errors the correct pieces anchor the
    repair rather than being moved themselves. The most deviant qualifying
    piece is repaired first (ties: shorter, then earlier). An octave snap is
    kept only if it lands within ``jump / 2`` of the flanks; otherwise the
    piece is interpolated.
    """
    x = x.copy()
    settled = set()
    for _ in range(4 * x.size + 1):
        pieces = _pieces(x, jump)
        if len(pieces) < 2:
            break
        longest = max(b - a for a, b in pieces)
        chosen = None
        for i, (a, b) in enumerate(pieces):
            n = b - a
            if n > max_len or n >= longest or (a, b) in settled:
                continue
            flanks = []
            if i > 0:
                flanks.append(x[a - 1])
            if i < len(pieces) - 1:
                flanks.append(x[b])
            level = np.median(x[a:b])
            if not all(abs(level - f) >= jump for f in flanks):
                continue
            reach = 3 * max_len
            centre = np.median(x[max(0, a - reach): b + reach])
            deviation = abs(level - centre)
            if deviation < abs(float(np.median(flanks)) - centre):
                continue
            key = (-deviation, n, a)
            if chosen is None or key < chosen[0]:
                chosen = (key, a, b, flanks)
        if chosen is None:
            break
        _, a, b, flanks = chosen
        before = x[a:b].copy()
        target = float(np.median(flanks))
        if octave_snap:
            x[a:b] += np.round(target - np.median(x[a:b]))
        if not octave_snap or any(abs(np.median(x[a:b]) - f) >= jump / 2 for f in flanks):
            if len(flanks) == 2:
                left, right = x[a - 1], x[b]
                frac = np.arange(1, b - a + 1) / (b - a + 1)
                x[a:b] = left + (right - left) * frac
            else:
                x[a:b] = flanks[0]
        if np.array_equal(before, x[a:b]):
            settled.add((a, b))
    return x


def _conditional_median(x: np.ndarray, window: int, tolerance: float) -> np.ndarray:
    half = window // 2
    if half == 0 or x.size < 2:
        return x
    x = x.copy()
    for _ in range(x.size + 1):
        changed = False
        for i in range(x.size):
            m = np.median(x[max(0, i - half): i + half + 1])
            if abs(x[i] - m) > tolerance:
                x[i] = m
                changed = True
        if not changed:
            break
    return x


def postprocess(contour: PitchContour, config: PostFilterConfig | None = None) -> PitchContour:
    """Repair spikes, register slips and outliers in the voiced F0 values."""
    config = config or PostFilterConfig()
    runs = contour.voiced_runs()
    if not runs:
        return contour.copy()
    jump = config.jump_threshold / 1200.0
    tol = config.median_tolerance / 1200.0
    max_len = int(np.floor(config.max_spike_duration / contour.hop + 1e-9))
    logf = np.log2(contour.f0)

    for _ in range(MAX_ROUNDS):
        start = logf.copy()
        for a, b in runs:
            logf[a:b] = _repair_spikes(logf[a:b], jump, max_len, config.octave_snap)
        centre = np.median(logf[contour.voiced])
        for a, b in runs:
            offset = np.median(logf[a:b]) - centre
            if abs(offset) * 1200.0 >= REGISTER_SNAP_CENTS:
                logf[a:b] -= np.round(offset)
        for a, b in runs:
            logf[a:b] = _conditional_median(logf[a:b], config.median_window, tol)
        if np.array_equal(start[contour.voiced], logf[contour.voiced]):
            break

    out = contour.copy()
    out.f0[contour.voiced] = np.exp2(logf[contour.voiced])
    return out
