"""Pitch trackers for singing voice.

Five trackers map a :class:`~pitchbench.signal.Signal` and a
:class:`TrackerConfig` to a :class:`~pitchbench.contour.PitchContour`:

* ``yin``  -- cumulative-mean-normalized difference function with an
  absolute dip threshold.
* ``acf``  -- Hann-windowed autocorrelation divided by the window's own
  autocorrelation (the "accurate autocorrelation" correction).
* ``nccf`` -- normalized cross-correlation candidates smoothed by a Viterbi
  pass over frames (single-rate; no decimated first pass).
* ``srh``  -- summation of residual harmonics on the LPC residual spectrum.
* ``ssh``  -- the same harmonic summation on the signal spectrum itself.

All trackers share the frame grid: frame ``k`` is centered at ``k * hop`` and
a signal of duration ``D`` yields ``floor(D / hop) + 1`` frames.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .contour import PitchContour, decimate_contour, read_contour
from .signal import (
    Signal,
    amplitude_spectrum,
    autocorrelation,
    default_lpc_order,
    gather_frames,
    lpc_residual,
    n_frames_for,
    window_samples,
    yin_difference,
)

logger = logging.getLogger(__name__)
_warned: set = set()


def _warn_once(message: str) -> None:
    if message not in _warned:
        _warned.add(message)
        logger.warning(message)

# Frames processed per vectorized batch; bounds peak memory on long files.
BATCH = 256


@dataclass(frozen=True)
class TrackerConfig:
    """Analysis parameters shared by all trackers.

    ``voicing_threshold`` means: the dip threshold on the normalized
    difference (yin), the minimum normalized autocorrelation peak (acf), the
    NCCF value at which voiced and unvoiced local costs break even (nccf), and
    the minimum harmonic-summation score (srh, ssh).
    """

    f0_min: float = 60.0
    f0_max: float = 1500.0
    hop: float = 0.010
    window_length: float = 0.040
    voicing_threshold: float = 0.45
    n_harmonics: int = 5
    lpc_order: int | None = None
    # acf
    octave_bias: float = 0.05
    silence_threshold: float = 0.03
    # nccf
    n_candidates: int = 8
    octave_cost: float = 0.4
    voicing_switch_cost: float = 0.2
    lag_weight: float = 0.3
    candidate_floor: float = 0.3
    # srh / ssh
    grid_cents: float = 10.0
    norm_band: float = 8000.0

    def replace(self, **changes) -> "TrackerConfig":
        return dataclasses.replace(self, **changes)

    def validate(self, sample_rate: int) -> None:
        if not 0 < self.f0_min < self.f0_max:
            raise ValueError(f"need 0 < f0_min < f0_max, got {self.f0_min}, {self.f0_max}")
        if self.f0_max >= sample_rate / 2:
            raise ValueError(f"f0_max {self.f0_max} Hz must stay below Nyquist ({sample_rate / 2} Hz)")
        if self.hop <= 0 or self.window_length <= 0:
            raise ValueError("hop and window_length must be positive")


TRACKER_NAMES = ("yin", "acf", "nccf", "srh", "ssh")

# Trackers whose voicing threshold the two-stage search tunes.
THRESHOLD_TUNABLE = frozenset({"acf", "srh", "ssh"})

_BASE = TrackerConfig()
PRESETS = {
    "default": {
        "yin": _BASE.replace(window_length=0.016, voicing_threshold=0.10),
        "acf": _BASE.replace(window_length=0.040, voicing_threshold=0.45),
        "nccf": _BASE.replace(window_length=0.040, voicing_threshold=0.50),
        "srh": _BASE.replace(window_length=0.100, voicing_threshold=0.070),
        "ssh": _BASE.replace(window_length=0.100, voicing_threshold=0.070),
    },
    "optimized": {
        "yin": _BASE.replace(window_length=0.010, voicing_threshold=0.10),
        "acf": _BASE.replace(window_length=0.040, voicing_threshold=0.25),
        "nccf": _BASE.replace(window_length=0.040, voicing_threshold=0.50),
        "srh": _BASE.replace(window_length=0.125, voicing_threshold=0.065),
        "ssh": _BASE.replace(window_length=0.100, voicing_threshold=0.095),
    },
}


def preset(tracker: str, variant: str = "optimized") -> TrackerConfig:
    """Shipped parameters for ``tracker``; ``variant`` is ``default`` or ``optimized``."""
    try:
        return PRESETS[variant][tracker]
    except KeyError:
        raise KeyError(f"no preset for tracker {tracker!r}, variant {variant!r}") from None


# --- shared helpers --------------------------------------------------------

def _frame_centers(signal: Signal, hop: float) -> np.ndarray:
    n = n_frames_for(len(signal), signal.sample_rate, hop)
    return np.floor(np.arange(n) * hop * signal.sample_rate + 0.5).astype(np.int64)


def _lag_range(config: TrackerConfig, sample_rate: int) -> tuple[int, int]:
    min_lag = max(2, int(math.floor(sample_rate / config.f0_max)))
    max_lag = int(math.ceil(sample_rate / config.f0_min))
    return min_lag, max_lag


def _parabolic(values: np.ndarray, index: np.ndarray):
    """Vertex of the parabola through ``values[i-1..i+1]`` for each row.

    Returns the fractional offset in ``[-0.5, 0.5]`` and the interpolated value.
    """
    rows = np.arange(values.shape[0])
    i = np.clip(index, 1, values.shape[1] - 2)
    left, mid, right = values[rows, i - 1], values[rows, i], values[rows, i + 1]
    denom = left - 2.0 * mid + right
    with np.errstate(divide="ignore", invalid="ignore"):
        offset = np.where(np.abs(denom) > 1e-300, 0.5 * (left - right) / denom, 0.0)
    offset = np.clip(offset, -0.5, 0.5)
    offset = np.where(i == index, offset, 0.0)
    peak = mid - 0.25 * (left - right) * offset
    return offset, np.where(i == index, peak, values[rows, index])


def _contour(config, voiced, f0, score) -> PitchContour:
    f0 = np.clip(np.where(voiced, f0, np.nan), config.f0_min, config.f0_max)
    return PitchContour(config.hop, voiced, f0, np.where(voiced, score, 0.0))


def _batches(n):
    for start in range(0, n, BATCH):
        yield slice(start, min(n, start + BATCH))


def _check_signal(signal: Signal, config: TrackerConfig) -> None:
    if len(signal) == 0:
        raise ValueError("cannot track an empty signal")
    config.validate(signal.sample_rate)


# --- YIN -------------------------------------------------------------------

def _yin_pick(cmnd, min_lag, threshold):
    """Smallest lag whose dip falls under ``threshold``, walked to its local minimum."""
    region = cmnd[:, min_lag:]
    below = region < threshold
    has_dip = below.any(axis=1)
    first = np.argmax(below, axis=1)
    best = np.argmin(region, axis=1)
    chosen = np.where(has_dip, first, best)
    rows = np.arange(region.shape[0])
    last = region.shape[1] - 1
    # Walk downhill from the first sub-threshold lag to the bottom of the dip.
    moving = has_dip.copy()
    while moving.any():
        nxt = np.minimum(chosen + 1, last)
        step = moving & (chosen < last) & (region[rows, nxt] < region[rows, chosen])
        chosen = np.where(step, nxt, chosen)
        moving = step
    return chosen + min_lag


def track_yin(signal: Signal, config: TrackerConfig) -> PitchContour:
    """YIN-style tracker.

    Each frame integrates the difference function over ``window_length`` and
    evaluates lags up to ``1 / f0_min``. The smallest lag whose normalized
    difference dips under ``voicing_threshold`` (walked down to the local
    minimum) gives the period, refined by parabolic interpolation. Frames
    with no dip under the threshold are unvoiced; ``score = 1 - min d'``.
    The analysis segment is re-centered on the detected period so the
    estimate is attributed to the frame time.
    """
    _check_signal(signal, config)
    sr = signal.sample_rate
    min_lag, max_lag = _lag_range(config, sr)
    width = max(2, int(round(config.window_length * sr)))
    length = width + max_lag
    centers = _frame_centers(signal, config.hop)
    n = centers.size
    voiced = np.zeros(n, bool)
    f0 = np.zeros(n)
    score = np.zeros(n)

    for sl in _batches(n):
        c = centers[sl]
        frames = gather_frames(signal.samples, c - length // 2, length)
        lag = _yin_pick(yin_difference(frames, max_lag), min_lag, config.voicing_threshold)
        frames = gather_frames(signal.samples, c - (width + lag) // 2, length)
        cmnd = yin_difference(frames, max_lag)
        lag = _yin_pick(cmnd, min_lag, config.voicing_threshold)
        offset, dip = _parabolic(cmnd, lag)
        dip = np.maximum(dip, 0.0)
        voiced[sl] = dip <= config.voicing_threshold
        f0[sl] = sr / (lag + offset)
        score[sl] = np.clip(1.0 - dip, 0.0, 1.0)
    return _contour(config, voiced, f0, score)


# --- accurate autocorrelation ------------------------------------------------

def track_acf(signal: Signal, config: TrackerConfig) -> PitchContour:
    """Autocorrelation tracker with window-autocorrelation correction.

    The Hann-windowed, mean-removed frame's normalized autocorrelation is
    divided by the normalized autocorrelation of the window. Local maxima in
    the lag range are ranked by ``peak - octave_bias * log2(f0_min * lag)``,
    which settles period/multiple-period ties in favor of the shorter lag.
    A frame is voiced when the winning peak reaches ``voicing_threshold`` and
    its absolute peak is above ``silence_threshold`` times the global peak.
    """
    _check_signal(signal, config)
    sr = signal.sample_rate
    if config.window_length * config.f0_min < 2:
        _warn_once(f"acf window {config.window_length:.3f} s holds fewer than two periods "
                   f"of {config.f0_min:.0f} Hz")
    min_lag, max_lag = _lag_range(config, sr)
    length = window_samples(config.window_length, sr)
    max_lag = min(max_lag, length // 2)
    if max_lag <= min_lag + 1:
        raise ValueError("acf window too short for the requested F0 range")
    window = np.hanning(length)
    r_window = autocorrelation(window)
    r_window = r_window / r_window[0]
    global_peak = float(np.max(np.abs(signal.samples - signal.samples.mean()))) if len(signal) else 0.0
    centers = _frame_centers(signal, config.hop)
    n = centers.size
    voiced = np.zeros(n, bool)
    f0 = np.zeros(n)
    score = np.zeros(n)
    lags = np.arange(min_lag, max_lag + 1)
    bias = config.octave_bias * np.log2(config.f0_min * lags / sr)

    for sl in _batches(n):
        frames = gather_frames(signal.samples, centers[sl] - length // 2, length)
        frames = frames - frames.mean(axis=1, keepdims=True)
        local_peak = np.max(np.abs(frames), axis=1)
        r = autocorrelation(frames * window)
        energy = r[:, :1]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(energy > 0, r / energy, 0.0) / r_window
        # The window correction can push noisy lags past 1; no true peak exceeds it.
        r = np.minimum(r, 1.0)
        seg = r[:, min_lag - 1:max_lag + 2]
        inner = seg[:, 1:-1]
        is_peak = (inner >= seg[:, :-2]) & (inner > seg[:, 2:])
        strength = np.where(is_peak, inner - bias, -np.inf)
        best = np.argmax(strength, axis=1)
        found = np.isfinite(strength[np.arange(best.size), best])
        offset, peak = _parabolic(r, best + min_lag)
        silent = local_peak < config.silence_threshold * global_peak
        voiced[sl] = found & (peak >= config.voicing_threshold) & ~silent & (energy[:, 0] > 0)
        f0[sl] = sr / (best + min_lag + offset)
        score[sl] = np.clip(peak, 0.0, 1.0)
    return _contour(config, voiced, f0, score)


# --- NCCF + dynamic programming ---------------------------------------------

def _nccf(frames: np.ndarray, width: int, max_lag: int) -> np.ndarray:
    """``sum x[n] x[n+tau] / sqrt(sum x[n]^2 * sum x[n+tau]^2)`` over ``n < width``."""
    n = frames.shape[1]
    sq = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(frames * frames, axis=1)], axis=1)
    lags = np.arange(max_lag + 1)
    e0 = sq[:, width:width + 1]
    et = sq[:, lags + width] - sq[:, lags]
    nfft = scipy.fft.next_fast_len(n + width, real=True)
    head = scipy.fft.rfft(frames[:, :width], nfft, axis=1)
    full = scipy.fft.rfft(frames, nfft, axis=1)
    cross = scipy.fft.irfft(np.conj(head) * full, nfft, axis=1)[:, :max_lag + 1]
    denom = np.sqrt(e0 * et)
    # Relative floor: windows that are numerically silent carry no correlation.
    floor = 1e-10 * np.max(sq[:, -1:], axis=1, keepdims=True) + 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denom > floor, cross / denom, 0.0)


def _nccf_candidates(phi, min_lag, max_lag, k, floor, lag_weight):
    """Best ``k`` local maxima of each NCCF row: (lags, values), NaN-padded.

    Peaks are ranked by their lag-weighted value, the same quantity the local
    cost uses, so a strongly periodic frame keeps its shortest-period peak
    even when many multiples of the period reach the same correlation.
    """
    seg = phi[:, min_lag - 1:max_lag + 2]
    inner = seg[:, 1:-1]
    is_peak = (inner >= seg[:, :-2]) & (inner > seg[:, 2:])
    row_max = np.max(np.where(is_peak, inner, -np.inf), axis=1, keepdims=True)
    keep = is_peak & (inner >= floor * row_max) & (inner > 0)
    weight = 1.0 - lag_weight * np.arange(min_lag, max_lag + 1) / max_lag
    ranked = np.where(keep, inner * weight, -np.inf)
    order = np.argsort(-ranked, axis=1, kind="stable")[:, :k]
    rows = np.arange(phi.shape[0])[:, None]
    valid = np.isfinite(ranked[rows, order])
    lag_idx = order + min_lag
    lags = np.full(order.shape, np.nan)
    peaks = np.full(order.shape, np.nan)
    for j in range(order.shape[1]):
        offset, peak = _parabolic(phi, lag_idx[:, j])
        lags[:, j] = np.where(valid[:, j], lag_idx[:, j] + offset, np.nan)
        peaks[:, j] = np.where(valid[:, j], np.minimum(peak, 1.0), np.nan)
    return lags, peaks


def track_nccf(signal: Signal, config: TrackerConfig) -> PitchContour:
    """NCCF tracker with Viterbi smoothing.

    Per frame, up to ``n_candidates`` NCCF peaks in the lag range become
    voiced candidates with local cost ``1 - c * (1 - lag_weight * lag / max_lag)``;
    an unvoiced candidate costs ``max(c) + 1 - 2 * voicing_threshold``.
    Transitions between voiced candidates cost ``octave_cost`` per octave
    of F0 change and a voicing change costs ``voicing_switch_cost``. The
    minimum-cost path defines voicing and F0. Frames whose centred window
    spans less than ``silence_threshold`` times the global peak-to-peak
    range get no voiced candidates.
    """
    _check_signal(signal, config)
    sr = signal.sample_rate
    min_lag, max_lag = _lag_range(config, sr)
    width = max(2, int(round(config.window_length * sr)))
    length = width + max_lag + 1
    centers = _frame_centers(signal, config.hop)
    n = centers.size
    k = config.n_candidates
    cand_lag = np.full((n, k), np.nan)
    cand_val = np.full((n, k), np.nan)
    global_span = float(np.ptp(signal.samples)) if len(signal) else 0.0

    for sl in _batches(n):
        c = centers[sl]
        local = gather_frames(signal.samples, c - width // 2, width)
        silent = np.ptp(local, axis=1) < config.silence_threshold * global_span
        frames = gather_frames(signal.samples, c - length // 2, length)
        frames -= frames.mean(axis=1, keepdims=True)
        phi = _nccf(frames, width, max_lag + 1)
        seg = phi[:, min_lag:max_lag + 1]
        rough = np.argmax(seg, axis=1) + min_lag
        frames = gather_frames(signal.samples, c - (width + rough) // 2, length)
        frames -= frames.mean(axis=1, keepdims=True)
        phi = _nccf(frames, width, max_lag + 1)
        lags, vals = _nccf_candidates(phi, min_lag, max_lag, k, config.candidate_floor,
                                      config.lag_weight)
        lags[silent] = np.nan
        vals[silent] = np.nan
        cand_lag[sl], cand_val[sl] = lags, vals

    best_val = np.nan_to_num(np.nanmax(np.where(np.isnan(cand_val), -np.inf, cand_val), axis=1),
                             neginf=0.0)
    best_val = np.maximum(best_val, 0.0)
    voiced_cost = np.where(np.isnan(cand_val), np.inf,
                           1.0 - cand_val * (1.0 - config.lag_weight * cand_lag / max_lag))
    unvoiced_cost = best_val + 1.0 - 2.0 * config.voicing_threshold
    log_f = np.log2(sr / cand_lag)

    # Viterbi over states [candidates..., unvoiced].
    cost = np.concatenate([voiced_cost[0], [unvoiced_cost[0]]])
    back = np.zeros((n, k + 1), dtype=np.int64)
    for t in range(1, n):
        prev_f = log_f[t - 1]
        cur_f = log_f[t]
        jump = np.abs(cur_f[:, None] - prev_f[None, :])
        vv = cost[None, :k] + config.octave_cost * np.nan_to_num(jump, nan=np.inf)
        uv = cost[k] + config.voicing_switch_cost
        to_voiced = np.concatenate([vv, np.full((k, 1), uv)], axis=1)
        from_voiced = cost[:k] + config.voicing_switch_cost
        to_unvoiced = np.concatenate([from_voiced, [cost[k]]])
        arg_v = np.argmin(to_voiced, axis=1)
        arg_u = int(np.argmin(to_unvoiced))
        new_cost = np.empty(k + 1)
        new_cost[:k] = to_voiced[np.arange(k), arg_v] + voiced_cost[t]
        new_cost[k] = to_unvoiced[arg_u] + unvoiced_cost[t]
        back[t, :k] = arg_v
        back[t, k] = arg_u
        cost = new_cost

    state = int(np.argmin(cost))
    path = np.empty(n, dtype=np.int64)
    for t in range(n - 1, -1, -1):
        path[t] = state
        state = back[t, state]
    voiced = path < k
    idx = np.minimum(path, k - 1)
    rows = np.arange(n)
    lag = cand_lag[rows, idx]
    f0 = np.where(voiced, sr / np.where(voiced, lag, 1.0), np.nan)
    return _contour(config, voiced, f0, np.where(voiced, cand_val[rows, idx], 0.0))


# --- harmonic summation (SRH / SSH) -------------------------------------------

def _harmonic_scores(spectra, n_bins, sample_rate, candidates, n_harmonics):
    """SRH criterion for each spectrum row at each candidate frequency."""
    bin_hz = sample_rate / n_bins
    top = spectra.shape[1] - 1

    def at(freqs):
        pos = freqs / bin_hz
        lo = np.floor(pos).astype(np.int64)
        frac = pos - lo
        inside = lo < top
        lo = np.minimum(lo, top - 1)
        val = spectra[:, lo] * (1.0 - frac) + spectra[:, lo + 1] * frac
        return np.where(inside, val, 0.0)

    score = at(candidates)
    for h in range(2, n_harmonics + 1):
        score = score + at(h * candidates) - at((h - 0.5) * candidates)
    return score


def _summation_tracker(signal: Signal, config: TrackerConfig, lpc_order: int) -> PitchContour:
    _check_signal(signal, config)
    sr = signal.sample_rate
    length = window_samples(config.window_length, sr)
    # One-hertz bins (or finer when the window exceeds one second).
    n_bins = max(length, sr)
    band = int(min(n_bins // 2, math.floor(config.norm_band * n_bins / sr)))
    n_steps = int(math.floor(1200 * math.log2(config.f0_max / config.f0_min) / config.grid_cents))
    candidates = config.f0_min * 2.0 ** (np.arange(n_steps + 1) * config.grid_cents / 1200)
    centers = _frame_centers(signal, config.hop)
    n = centers.size
    voiced = np.zeros(n, bool)
    f0 = np.zeros(n)
    score = np.zeros(n)

    for sl in _batches(n):
        frames = gather_frames(signal.samples, centers[sl] - length // 2, length)
        frames = frames - frames.mean(axis=1, keepdims=True)
        if lpc_order > 0:
            frames, _ = lpc_residual(frames, lpc_order)
        spectra = amplitude_spectrum(frames, n_bins)[:, :band + 1]
        norm = np.linalg.norm(spectra, axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            spectra = np.where(norm > 0, spectra / norm, 0.0)
        values = _harmonic_scores(spectra, n_bins, sr, candidates, config.n_harmonics)
        best = np.argmax(values, axis=1)
        offset, peak = _parabolic(values, best)
        voiced[sl] = peak >= config.voicing_threshold
        f0[sl] = config.f0_min * 2.0 ** ((best + offset) * config.grid_cents / 1200)
        score[sl] = np.maximum(peak, 0.0)
    return _contour(config, voiced, f0, score)


def track_srh(signal: Signal, config: TrackerConfig) -> PitchContour:
    """Summation of residual harmonics.

    The amplitude spectrum ``E`` of each frame's LPC residual (Blackman
    window, 1 Hz bins, unit L2 norm below ``norm_band``) is scored on a
    log-spaced F0 grid as ``E(f) + sum_{k=2..N} [E(k f) - E((k - 1/2) f)]``;
    the maximum (parabolically refined on the grid) is the F0 and the frame
    is voiced when it reaches ``voicing_threshold``.
    """
    order = config.lpc_order if config.lpc_order is not None else default_lpc_order(signal.sample_rate)
    return _summation_tracker(signal, config, order)


def track_ssh(signal: Signal, config: TrackerConfig) -> PitchContour:
    """Summation of spectral harmonics: :func:`track_srh` without the LPC stage."""
    return _summation_tracker(signal, config, 0)


TRACKERS = {
    "yin": track_yin,
    "acf": track_acf,
    "nccf": track_nccf,
    "srh": track_srh,
    "ssh": track_ssh,
}


def run_tracker(name: str, signal: Signal, config: TrackerConfig | None = None) -> PitchContour:
    """Run a tracker by name; ``config`` defaults to the optimized preset."""
    try:
        fn = TRACKERS[name]
    except KeyError:
        raise KeyError(f"unknown tracker {name!r}; choose from {', '.join(TRACKER_NAMES)}") from None
    return fn(signal, config if config is not None else preset(name))


def import_external_contour(path, hop: float = 0.010) -> PitchContour:
    """Load a contour CSV produced elsewhere and decimate it onto ``hop``.

    The source hop is read from the time column and must divide ``hop``
    exactly; every N-th source frame is kept. Rows with ``f0_hz`` 0 are
    unvoiced.
    """
    return decimate_contour(read_contour(path), hop)
