"""Synthetic singing-like test signals with exactly known F0.

A glottal flow pulse train is driven by a phase accumulator running at the
specified instantaneous F0, differentiated, and filtered through four vowel
resonances chosen by singer register. The matching EGG channel is the
low-passed vocal-fold contact waveform built from the same glottal instants.
Per-cycle jitter perturbs the glottal instants without accumulating drift, so
the reference contour stays the underlying F0 track.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.ndimage
import scipy.signal

from .contour import PitchContour, write_contour
from .signal import Signal, n_frames_for, save_audio

F0_FLOOR = 60.0
F0_CEIL = 1500.0

# Vocal ranges by singer category: F2-F4, F3-F5, C4-C6.
REGISTER_RANGES = {
    "baritone": (87.307, 349.228),
    "countertenor": (174.614, 698.456),
    "soprano": (261.626, 1046.502),
}

# (frequency Hz, bandwidth Hz) of the vowel resonances per register.
FORMANTS = {
    "baritone": [(650, 80), (1080, 90), (2650, 120), (2900, 130)],
    "countertenor": [(700, 130), (1150, 140), (2800, 180), (3300, 200)],
    "soprano": [(900, 200), (1300, 200), (2900, 250), (3800, 300)],
}

# Open quotient per laryngeal mechanism; M2 also gets an extra spectral tilt.
OPEN_QUOTIENT = {"M1": 0.5, "M2": 0.8}
M2_TILT = 0.6

ONSET_RAMP = 0.005


@dataclass(frozen=True)
class Segment:
    """One piece of an F0 track.

    ``kind`` is ``sustain`` (constant ``f0`` with optional vibrato),
    ``glissando`` (log-linear ``f0`` to ``f0_end``) or ``silence``. Amplitude
    ramps linearly from ``amp_start`` to ``amp_end``.
    """

    kind: str
    duration: float
    f0: float = 0.0
    f0_end: float | None = None
    vibrato_rate: float = 0.0
    vibrato_depth: float = 0.0
    amp_start: float = 1.0
    amp_end: float = 1.0

    @property
    def voiced(self) -> bool:
        return self.kind != "silence"

    def f0_at(self, t):
        """Instantaneous F0 at time ``t`` seconds into the segment."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "silence":
            return np.full(t.shape, np.nan)
        if self.kind == "glissando":
            end = self.f0 if self.f0_end is None else self.f0_end
            base = self.f0 * (end / self.f0) ** (t / self.duration)
        else:
            base = np.full(t.shape, self.f0)
        if self.vibrato_depth:
            base = base * 2.0 ** (self.vibrato_depth / 1200 * np.sin(2 * np.pi * self.vibrato_rate * t))
        return base

    def nominal_f0s(self):
        if self.kind == "silence":
            return []
        if self.kind == "glissando":
            return [self.f0, self.f0 if self.f0_end is None else self.f0_end]
        return [self.f0]


def sustain(f0, duration, vibrato_rate=0.0, vibrato_depth=0.0, amp=(1.0, 1.0)):
    return Segment("sustain", duration, f0, None, vibrato_rate, vibrato_depth, *amp)


def glissando(f0_start, f0_end, duration, amp=(1.0, 1.0)):
    return Segment("glissando", duration, f0_start, f0_end, 0.0, 0.0, *amp)


def silence(duration):
    return Segment("silence", duration, amp_start=0.0, amp_end=0.0)


@dataclass(frozen=True)
class VoiceSpec:
    segments: tuple
    register: str = "baritone"
    mechanism: str = "M1"
    sample_rate: int = 22050
    jitter: float = 0.0
    noise_level: float = 0.0
    seed: int = 0

    def validate(self):
        if self.register not in REGISTER_RANGES:
            raise ValueError(f"unknown register {self.register!r}")
        if self.mechanism not in OPEN_QUOTIENT:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if not self.segments:
            raise ValueError("a voice spec needs at least one segment")
        lo, hi = REGISTER_RANGES[self.register]
        for seg in self.segments:
            if seg.duration <= 0:
                raise ValueError(f"segment duration must be positive: {seg}")
            if seg.kind not in ("sustain", "glissando", "silence"):
                raise ValueError(f"unknown segment kind {seg.kind!r}")
            for f in seg.nominal_f0s():
                if not F0_FLOOR <= f <= F0_CEIL:
                    raise ValueError(f"F0 {f} Hz outside [{F0_FLOOR}, {F0_CEIL}] Hz")
                # Half-semitone slack for rounding of note frequencies.
                if not lo * 2 ** (-0.5 / 12) <= f <= hi * 2 ** (0.5 / 12):
                    raise ValueError(f"F0 {f} Hz outside the {self.register} range {lo:.1f}-{hi:.1f} Hz")
            if seg.vibrato_depth and seg.f0 * 2 ** (seg.vibrato_depth / 1200) > F0_CEIL:
                raise ValueError("vibrato excursion leaves the F0 search range")
        if self.jitter < 0 or self.noise_level < 0:
            raise ValueError("jitter and noise_level must be non-negative")

    @property
    def duration(self) -> float:
        return float(sum(seg.duration for seg in self.segments))


def _segment_bounds(spec: VoiceSpec):
    edges = np.concatenate([[0.0], np.cumsum([seg.duration for seg in spec.segments])])
    return edges[:-1], edges[1:]


def f0_track(spec: VoiceSpec, times) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``(voiced, f0)`` of ``spec`` at arbitrary times in seconds."""
    times = np.asarray(times, dtype=np.float64)
    voiced = np.zeros(times.shape, bool)
    f0 = np.full(times.shape, np.nan)
    starts, stops = _segment_bounds(spec)
    last = len(spec.segments) - 1
    for i, (seg, start, stop) in enumerate(zip(spec.segments, starts, stops)):
        # The final segment owns its end point so a frame at t = duration is covered.
        inside = (times >= start) & ((times < stop) | ((i == last) & (times <= stop + 1e-9)))
        if seg.voiced and inside.any():
            voiced[inside] = True
            f0[inside] = seg.f0_at(times[inside] - start)
    return voiced, f0


def _rosenberg(u, open_quotient):
    rise = 0.65 * open_quotient
    fall = open_quotient - rise
    out = np.zeros_like(u)
    opening = u < rise
    closing = (u >= rise) & (u < open_quotient)
    out[opening] = 0.5 * (1 - np.cos(np.pi * u[opening] / rise))
    out[closing] = np.cos(0.5 * np.pi * (u[closing] - rise) / fall)
    return out


def _resonator(freq, bandwidth, sample_rate):
    r = np.exp(-np.pi * bandwidth / sample_rate)
    a = np.array([1.0, -2 * r * np.cos(2 * np.pi * freq / sample_rate), r * r])
    return np.array([a.sum()]), a


def synthesize(spec: VoiceSpec) -> tuple[Signal, Signal, PitchContour]:
    """Render ``spec`` into ``(audio, egg, truth)``.

    The truth contour is sampled on the 10 ms grid directly from the F0
    track, so it is exact by construction. Samples are rounded to float32
    precision, which makes a WAV round trip lossless.
    """
    spec.validate()
    sr = spec.sample_rate
    n = int(round(spec.duration * sr))
    t = np.arange(n) / sr
    voiced, f0 = f0_track(spec, t)

    # Phase runs through silences at the last voiced F0 so there is no jump.
    drive = f0.copy()
    if np.isnan(drive[0]):
        first = np.flatnonzero(voiced)
        drive[0] = f0[first[0]] if first.size else 100.0
    idx = np.where(np.isnan(drive), 0, np.arange(n))
    np.maximum.accumulate(idx, out=idx)
    drive = drive[idx]
    phase = np.concatenate([[0.0], np.cumsum(drive[:-1] / sr)])

    rng = np.random.default_rng(spec.seed)
    if spec.jitter > 0:
        cycles = np.arange(int(np.floor(phase[-1])) + 2, dtype=np.float64)
        instants = np.interp(cycles, phase, t, right=np.nan)
        tail = np.isnan(instants)
        instants[tail] = t[-1] + (cycles[tail] - phase[-1]) / drive[-1]
        periods = 1.0 / np.interp(instants, t, drive)
        instants = instants + spec.jitter * periods * rng.standard_normal(cycles.size)
        instants = np.maximum.accumulate(instants)
        phase = np.interp(t, instants, cycles)
    cycle_pos = phase - np.floor(phase)

    # Amplitude envelope with short raised-cosine ramps at voicing edges.
    amp = np.zeros(n)
    starts, stops = _segment_bounds(spec)
    for seg, start, stop in zip(spec.segments, starts, stops):
        inside = (t >= start) & (t < stop)
        if seg.voiced:
            frac = (t[inside] - start) / seg.duration
            amp[inside] = seg.amp_start + (seg.amp_end - seg.amp_start) * frac
    ramp = max(1, int(round(ONSET_RAMP * sr)))
    edge_distance = scipy.ndimage.distance_transform_edt(voiced)
    gate = 0.5 * (1 - np.cos(np.pi * np.minimum(edge_distance, ramp) / ramp))
    amp = amp * gate

    flow = _rosenberg(cycle_pos, OPEN_QUOTIENT[spec.mechanism])
    source = np.diff(flow, prepend=flow[0]) * sr / drive
    if spec.mechanism == "M2":
        source = scipy.signal.lfilter([1 - M2_TILT], [1, -M2_TILT], source)
    source = source * amp
    audio = source
    for freq, bw in FORMANTS[spec.register]:
        b, a = _resonator(freq, bw, sr)
        audio = scipy.signal.lfilter(b, a, audio)
    peak = np.max(np.abs(audio))
    if peak > 0:
        audio = 0.5 * audio / peak
    if spec.noise_level > 0:
        audio = audio + spec.noise_level * 0.5 * rng.standard_normal(n)

    contact = (1.0 - flow) * amp
    sos = scipy.signal.butter(2, min(4000.0, 0.4 * sr), fs=sr, output="sos")
    egg = scipy.signal.sosfilt(sos, contact - 0.5 * amp)
    peak = np.max(np.abs(egg))
    if peak > 0:
        egg = 0.5 * egg / peak

    hop = 0.010
    times = np.arange(n_frames_for(n, sr, hop)) * hop
    truth_voiced, truth_f0 = f0_track(spec, times)
    truth = PitchContour(hop, truth_voiced, truth_f0, truth_voiced.astype(float))
    return (Signal(audio.astype(np.float32), sr), Signal(egg.astype(np.float32), sr), truth)


# --- corpus recipe ---------------------------------------------------------

def _segment_from_dict(d) -> Segment:
    amp = d.get("amp", [1.0, 1.0])
    return Segment(d["kind"], d["duration"], d.get("f0", 0.0), d.get("f0_end"),
                   d.get("vibrato_rate", 0.0), d.get("vibrato_depth", 0.0), amp[0], amp[1])


@dataclass(frozen=True)
class CorpusItem:
    item_id: str
    spec: VoiceSpec
    singer_id: str
    exercise: str

    @property
    def category(self):
        return self.spec.register

    @property
    def mechanism(self):
        return self.spec.mechanism


def load_recipe(path=None, sample_rate: int | None = None) -> list[CorpusItem]:
    """Read a corpus recipe (JSON); the packaged standard corpus by default."""
    if path is None:
        text = resources.files("pitchbench").joinpath("data/corpus.json").read_text()
    else:
        text = Path(path).read_text()
    recipe = json.loads(text)
    defaults = recipe.get("defaults", {})
    items = []
    for entry in recipe["items"]:
        params = {**defaults, **{k: v for k, v in entry.items() if k in ("jitter", "noise_level", "sample_rate")}}
        spec = VoiceSpec(
            segments=tuple(_segment_from_dict(s) for s in entry["segments"]),
            register=entry["register"],
            mechanism=entry["mechanism"],
            sample_rate=int(sample_rate or params.get("sample_rate", 22050)),
            jitter=float(params.get("jitter", 0.0)),
            noise_level=float(params.get("noise_level", 0.0)),
            seed=int(entry["seed"]),
        )
        spec.validate()
        items.append(CorpusItem(entry["id"], spec, entry.get("singer_id", entry["register"]),
                                entry["exercise"]))
    return items


MANIFEST_HEADER = ["audio_path", "reference_path", "singer_id", "category", "mechanism", "exercise"]


def write_corpus(out_dir, items=None, sample_rate: int | None = None) -> Path:
    """Render a recipe to WAV/CSV files plus ``manifest.csv``; returns the manifest path.

    Each item yields ``<id>.wav`` (audio), ``<id>.egg.wav`` and
    ``<id>.f0.csv`` (truth contour).
    """
    import csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if items is None:
        items = load_recipe(sample_rate=sample_rate)
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for item in items:
            audio, egg, truth = synthesize(item.spec)
            save_audio(out / f"{item.item_id}.wav", audio)
            save_audio(out / f"{item.item_id}.egg.wav", egg)
            write_contour(out / f"{item.item_id}.f0.csv", truth)
            writer.writerow([f"{item.item_id}.wav", f"{item.item_id}.f0.csv", item.singer_id,
                             item.category, item.mechanism, item.exercise])
    return manifest
