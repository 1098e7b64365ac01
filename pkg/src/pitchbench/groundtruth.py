"""Reference contours from the EGG channel.

The NCCF tracker runs on the EGG and on its first difference (dEGG). The
two contours are kept side by side with a disagreement score; choosing one
of them, or excluding the item, is left to a human reviewer.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .contour import PitchContour
from .signal import Signal
from .trackers import TrackerConfig, preset, track_nccf

DEFAULT_MAX_DISAGREEMENT = 0.05
# EGG is clean and strongly periodic, so a shorter correlation window than
# the acoustic default keeps voicing onsets sharp.
EGG_WINDOW = 0.020


def egg_config() -> TrackerConfig:
    return preset("nccf", "default").replace(window_length=EGG_WINDOW)


@dataclass(eq=False)
class ReferencePair:
    egg_contour: PitchContour
    degg_contour: PitchContour
    disagreement: float

    def __post_init__(self):
        a, b = self.egg_contour, self.degg_contour
        if len(a) != len(b) or abs(a.hop - b.hop) > 1e-9:
            raise ValueError("EGG and dEGG contours must share hop and length")
        if not 0.0 <= self.disagreement <= 1.0:
            raise ValueError("disagreement must lie in [0, 1]")

    def disagreeing_frames(self) -> np.ndarray:
        return _disagreeing(self.egg_contour, self.degg_contour)


def differentiate(signal: Signal) -> Signal:
    """First difference ``y[n] = x[n] - x[n-1]`` with ``y[0] = 0``."""
    x = signal.samples
    if x.size < 2:
        raise ValueError("need at least two samples to differentiate")
    y = np.empty_like(x)
    y[0] = 0.0
    np.subtract(x[1:], x[:-1], out=y[1:])
    return Signal(y, signal.sample_rate)


def _disagreeing(a: PitchContour, b: PitchContour, threshold: float = 100.0) -> np.ndarray:
    out = a.voiced != b.voiced
    both = a.voiced & b.voiced
    cents = 1200.0 * np.abs(np.log2(a.f0[both] / b.f0[both]))
    out[both] = cents >= threshold
    return out


def extract_reference(egg: Signal, tracker_config: TrackerConfig | None = None) -> ReferencePair:
    """Track F0 on the EGG and the dEGG and score their agreement."""
    if egg.samples.size == 0:
        raise ValueError("EGG signal is empty")
    config = tracker_config or egg_config()
    egg_contour = track_nccf(egg, config)
    degg_contour = track_nccf(differentiate(egg), config)
    flags = _disagreeing(egg_contour, degg_contour)
    disagreement = float(flags.mean()) if flags.size else 0.0
    return ReferencePair(egg_contour, degg_contour, disagreement)


def flag_for_exclusion(pair: ReferencePair,
                       max_disagreement: float = DEFAULT_MAX_DISAGREEMENT) -> bool:
    return pair.disagreement > max_disagreement


def write_exclusions(path, flagged) -> None:
    """One flagged path per line, in the order given."""
    with open(path, "w") as fh:
        for item in flagged:
            fh.write(f"{Path(item).as_posix()}\n")
