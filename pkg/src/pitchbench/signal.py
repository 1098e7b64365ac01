"""Audio containers, framing and the numeric kernels shared by the trackers.

Every kernel that works on a frame also accepts a 2-D array of frames and
operates along the last axis, so trackers can process whole batches of
frames at once.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.signal

from .errors import AudioFormatError, ParseError

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

_FORMAT_NAMES = {
    0x0001: "PCM",
    0x0002: "MS ADPCM",
    0x0003: "IEEE float",
    0x0006: "A-law",
    0x0007: "mu-law",
    0x0011: "IMA ADPCM",
    0x0055: "MPEG layer 3",
}


@dataclass(frozen=True, eq=False)
class Signal:
    """A mono sample sequence and its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("Signal samples must be one-dimensional")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("Signal samples must be finite")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def scaled(self, factor: float) -> "Signal":
        return Signal(self.samples * factor, self.sample_rate)


def n_frames_for(n_samples: int, sample_rate: int, hop: float) -> int:
    """Number of frames covering a signal: ``floor(duration / hop) + 1``."""
    # The epsilon absorbs float noise when duration is an exact multiple of hop.
    return int(math.floor(n_samples / (hop * sample_rate) + 1e-9)) + 1


def window_samples(window_length: float, sample_rate: int) -> int:
    """Window length in samples, rounded and made odd so it has a center."""
    n = int(round(window_length * sample_rate))
    n = max(n, 1)
    return n if n % 2 else n + 1


@dataclass(frozen=True)
class FrameGrid:
    """Uniform analysis grid; frame ``k`` is centered at ``origin + k * hop``."""

    hop: float = 0.010
    window_length: float = 0.030
    n_frames: int = 0
    origin: float = 0.0

    def __post_init__(self):
        if self.hop <= 0:
            raise ValueError("hop must be positive")
        if self.window_length <= 0:
            raise ValueError("window_length must be positive")
        if self.n_frames < 0:
            raise ValueError("n_frames must be non-negative")

    @classmethod
    def for_signal(cls, signal: Signal, hop: float = 0.010, window_length: float = 0.030):
        return cls(hop, window_length, n_frames_for(len(signal), signal.sample_rate, hop))

    def times(self) -> np.ndarray:
        return self.origin + np.arange(self.n_frames) * self.hop

    def centers(self, sample_rate: int) -> np.ndarray:
        """Sample index of every frame center (round half up)."""
        return np.floor(self.times() * sample_rate + 0.5).astype(np.int64)


def gather_frames(samples: np.ndarray, starts: np.ndarray, length: int) -> np.ndarray:
    """Stack ``samples[s:s + length]`` for every start, zero-padding outside the signal."""
    samples = np.asarray(samples, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.int64)
    if starts.size == 0:
        return np.zeros((0, length))
    pad_left = max(0, -int(starts.min()))
    pad_right = max(0, int(starts.max()) + length - samples.size)
    padded = np.pad(samples, (pad_left, pad_right))
    index = starts[:, None] + pad_left + np.arange(length)[None, :]
    return padded[index]


def frame_signal(signal: Signal, grid: FrameGrid, frame_index: int) -> np.ndarray:
    """Return the window of samples centered on one frame of ``grid``.

    The window holds ``window_samples(grid.window_length, sr)`` samples and is
    zero-padded symmetrically where it extends past the signal edges.

    Raises
    ------
    IndexError
        If ``frame_index`` is outside ``[0, grid.n_frames)``.
    """
    if not 0 <= frame_index < grid.n_frames:
        raise IndexError(f"frame {frame_index} out of range for a grid of {grid.n_frames} frames")
    sr = signal.sample_rate
    length = window_samples(grid.window_length, sr)
    center = int(math.floor((grid.origin + frame_index * grid.hop) * sr + 0.5))
    return gather_frames(signal.samples, np.array([center - length // 2]), length)[0]


def autocorrelation(frame) -> np.ndarray:
    """Linear autocorrelation ``r[tau] = sum_n x[n] x[n + tau]`` for ``tau < len``.

    Computed in the frequency domain with zero-padding to at least twice the
    frame length, so there is no circular wrap-around.
    """
    x = np.asarray(frame, dtype=np.float64)
    n = x.shape[-1]
    if n < 2:
        raise ValueError("autocorrelation needs at least 2 samples")
    nfft = scipy.fft.next_fast_len(2 * n, real=True)
    spectrum = scipy.fft.rfft(x, nfft, axis=-1)
    r = scipy.fft.irfft(spectrum.real ** 2 + spectrum.imag ** 2, nfft, axis=-1)[..., :n]
    return r


def yin_difference(frame, max_lag: int | None = None) -> np.ndarray:
    """Cumulative-mean-normalized difference function of a frame.

    The raw difference ``d[tau] = sum_{n<W} (x[n] - x[n + tau])**2`` uses a
    fixed integration window ``W = len(frame) - max_lag`` so every lag sums
    the same number of terms. The result is normalized as
    ``d'[tau] = d[tau] * tau / sum_{j=1..tau} d[j]`` with ``d'[0] = 1``.

    Parameters
    ----------
    frame : array_like
        Samples, or a 2-D batch of frames (one per row).
    max_lag : int, optional
        Largest lag evaluated. Defaults to ``len(frame) // 2``.

    Returns
    -------
    np.ndarray
        ``d'[0..max_lag]`` along the last axis. Zero-energy frames give 1
        everywhere.
    """
    x = np.asarray(frame, dtype=np.float64)
    n = x.shape[-1]
    if n < 2:
        raise ValueError("yin_difference needs at least 2 samples")
    if max_lag is None:
        max_lag = n // 2
    width = n - max_lag
    if width < 1 or max_lag < 1:
        raise ValueError(f"max_lag {max_lag} leaves no integration window in a frame of {n}")

    sq_cumsum = np.concatenate([np.zeros(x.shape[:-1] + (1,)), np.cumsum(x * x, axis=-1)], axis=-1)
    lags = np.arange(max_lag + 1)
    head_energy = sq_cumsum[..., width:width + 1]
    shifted_energy = sq_cumsum[..., lags + width] - sq_cumsum[..., lags]

    nfft = scipy.fft.next_fast_len(n + width, real=True)
    head = scipy.fft.rfft(x[..., :width], nfft, axis=-1)
    full = scipy.fft.rfft(x, nfft, axis=-1)
    cross = scipy.fft.irfft(np.conj(head) * full, nfft, axis=-1)[..., :max_lag + 1]

    diff = np.maximum(head_energy + shifted_energy - 2.0 * cross, 0.0)
    diff[..., 0] = 0.0
    running = np.cumsum(diff[..., 1:], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        normalized = diff[..., 1:] * lags[1:] / running
    # Floor relative to the frame energy keeps float residue of silent frames out.
    degenerate = running <= 1e-300 + 1e-12 * head_energy
    normalized = np.where(degenerate, 1.0, normalized)
    return np.concatenate([np.ones(x.shape[:-1] + (1,)), normalized], axis=-1)


def default_lpc_order(sample_rate: int) -> int:
    """Rule of thumb: two poles plus one per kHz of sample rate."""
    return 2 + int(round(sample_rate / 1000))


def levinson(r, order: int):
    """Levinson-Durbin recursion on autocorrelation rows.

    Parameters
    ----------
    r : array_like
        Autocorrelation values ``r[0..order]`` (1-D) or a batch of them.
    order : int
        Predictor order.

    Returns
    -------
    a : np.ndarray
        Inverse-filter coefficients ``[1, a1, ..., a_order]`` so that
        ``A(z) = 1 + sum_j a_j z**-j``.
    error : np.ndarray
        Final prediction-error power.
    degenerate : np.ndarray of bool
        Rows whose ``r[0]`` is zero; their filter is the identity.
    """
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    batch = r.shape[0]
    a = np.zeros((batch, order + 1))
    a[:, 0] = 1.0
    degenerate = ~(r[:, 0] > 0)
    error = np.where(degenerate, 1.0, r[:, 0])
    for i in range(1, order + 1):
        acc = r[:, i] + np.einsum("bj,bj->b", a[:, 1:i], r[:, i - 1:0:-1])
        k = np.where(degenerate, 0.0, -acc / error)
        previous = a[:, 1:i].copy()
        a[:, 1:i] = previous + k[:, None] * previous[:, ::-1]
        a[:, i] = k
        error = error * (1.0 - k * k)
    error = np.where(degenerate, 0.0, error)
    return a, error, degenerate


def lpc(frame, order: int):
    """Autocorrelation-method LPC of a frame or batch of frames.

    Returns ``(a, degenerate)`` where ``a`` holds inverse-filter coefficients
    with ``a[..., 0] == 1``.
    """
    x = np.asarray(frame, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    if order >= x2.shape[-1]:
        raise ValueError(f"LPC order {order} must be smaller than the frame length {x2.shape[-1]}")
    if order == 0:
        a = np.ones((x2.shape[0], 1))
        degenerate = ~(np.sum(x2 * x2, axis=-1) > 0)
    else:
        r = autocorrelation(x2)[:, :order + 1].copy()
        # Tiny white-noise floor keeps the recursion stable on line spectra.
        r[:, 0] *= 1.0 + 1e-9
        a, _, degenerate = levinson(r, order)
    if single:
        return a[0], bool(degenerate[0])
    return a, degenerate


def inverse_filter(frame, a) -> np.ndarray:
    """Apply the FIR inverse filter ``A(z)`` row by row (zero initial state)."""
    x = np.atleast_2d(np.asarray(frame, dtype=np.float64))
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    out = x * a[:, :1]
    for j in range(1, a.shape[1]):
        out[:, j:] += a[:, j:j + 1] * x[:, :-j]
    return out


def lpc_residual(frame, order: int):
    """LPC prediction residual of a frame (or batch of frames).

    Returns ``(residual, degenerate)``. A degenerate frame (zero energy) is
    returned unchanged with ``degenerate`` set.
    """
    x = np.asarray(frame, dtype=np.float64)
    a, degenerate = lpc(x, order)
    residual = inverse_filter(x, a)
    if x.ndim == 1:
        return residual[0], degenerate
    return residual, degenerate


def synthesis_filter(residual, a) -> np.ndarray:
    """All-pole filter ``1 / A(z)``; inverts :func:`inverse_filter` for 1-D input."""
    return scipy.signal.lfilter([1.0], np.asarray(a, dtype=np.float64), np.asarray(residual, dtype=np.float64))


def analysis_window(name: str, length: int) -> np.ndarray:
    """Periodic (DFT-even) analysis window, e.g. ``"blackman"`` or ``"hann"``."""
    return scipy.signal.get_window(name, length, fftbins=True)


def amplitude_spectrum(frame, n_bins: int, window: str = "blackman") -> np.ndarray:
    """One-sided magnitude spectrum of the windowed frame zero-padded to ``n_bins``.

    Bin ``k`` sits at ``k * sample_rate / n_bins``; ``n_bins // 2 + 1`` bins
    are returned.
    """
    x = np.asarray(frame, dtype=np.float64)
    if n_bins < x.shape[-1]:
        raise ValueError(f"n_bins ({n_bins}) must be at least the frame length ({x.shape[-1]})")
    windowed = x * analysis_window(window, x.shape[-1])
    return np.abs(scipy.fft.rfft(windowed, n_bins, axis=-1))


# --- WAV input/output ------------------------------------------------------

def _format_name(tag, bits):
    base = _FORMAT_NAMES.get(tag, f"format tag 0x{tag:04X}")
    return f"{base} {bits}-bit"


def load_audio(path, channel: int | None = None) -> Signal:
    """Read a RIFF/WAVE file as a mono :class:`Signal`.

    Supports 16-bit PCM (scaled by 1/32768) and 32-bit IEEE float, one or two
    channels. Stereo is averaged unless ``channel`` selects one.

    Raises
    ------
    AudioFormatError
        Unsupported encoding or channel layout.
    ParseError
        Malformed or truncated file; ``offset`` is the byte offset.
    """
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise ParseError(f"{path}: truncated RIFF header at byte {len(data)}", len(data))
    if data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise ParseError(f"{path}: not a RIFF/WAVE file", 0)

    fmt = None
    payload = None
    pos = 12
    while pos < len(data):
        if pos + 8 > len(data):
            raise ParseError(f"{path}: truncated chunk header at byte {pos}", pos)
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if chunk_id == b"fmt ":
            if size < 16 or body + size > len(data):
                raise ParseError(f"{path}: truncated fmt chunk at byte {body}", body)
            fmt = struct.unpack_from("<HHIIHH", data, body)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if size < 40:
                    raise ParseError(f"{path}: short extensible fmt chunk at byte {body}", body)
                (subformat,) = struct.unpack_from("<H", data, body + 24)
                fmt = (subformat,) + fmt[1:]
        elif chunk_id == b"data":
            if body + size > len(data):
                raise ParseError(
                    f"{path}: data chunk declares {size} bytes but file ends at byte {len(data)}",
                    len(data),
                )
            payload = data[body:body + size]
        pos = body + size + (size & 1)
        if fmt is not None and payload is not None:
            break

    if fmt is None:
        raise ParseError(f"{path}: missing fmt chunk", 12)
    if payload is None:
        raise ParseError(f"{path}: missing data chunk", pos)
    tag, n_channels, sample_rate, _, block_align, bits = fmt
    if (tag, bits) == (WAVE_FORMAT_PCM, 16):
        dtype, scale = "<i2", 1.0 / 32768.0
    elif (tag, bits) == (WAVE_FORMAT_IEEE_FLOAT, 32):
        dtype, scale = "<f4", 1.0
    else:
        raise AudioFormatError(f"{path}: unsupported encoding {_format_name(tag, bits)}")
    if n_channels not in (1, 2):
        raise AudioFormatError(f"{path}: unsupported channel count {n_channels}")
    if block_align and len(payload) % block_align:
        raise ParseError(f"{path}: data chunk ends mid-frame at byte {len(data)}", len(data))

    frames = np.frombuffer(payload, dtype=dtype).astype(np.float64) * scale
    frames = frames.reshape(-1, n_channels)
    if channel is None:
        samples = frames.mean(axis=1)
    else:
        if not 0 <= channel < n_channels:
            raise AudioFormatError(f"{path}: channel {channel} not present ({n_channels} channels)")
        samples = frames[:, channel]
    return Signal(samples, sample_rate)


def save_audio(path, signal: Signal) -> None:
    """Write ``signal`` as a mono 32-bit IEEE float WAV file."""
    payload = np.asarray(signal.samples, dtype="<f4").tobytes()
    n = len(signal)
    fmt = struct.pack("<HHIIHHH", WAVE_FORMAT_IEEE_FLOAT, 1, signal.sample_rate,
                      signal.sample_rate * 4, 4, 32, 0)
    chunks = (
        b"fmt " + struct.pack("<I", len(fmt)) + fmt
        + b"fact" + struct.pack("<II", 4, n)
        + b"data" + struct.pack("<I", len(payload)) + payload
    )
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks)
