"""Frame-level error metrics between an estimated and a reference contour.

GPE, FPE, VDE and FFE follow the usual definitions with the gross threshold
expressed in cents (one semitone by default). Each :class:`ErrorReport`
also carries the count, mean and centred sum of squares of its fine errors
so that reports can be pooled exactly across files.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np

from .contour import PitchContour
from .errors import AlignmentError

REPORT_FIELDS = ("gpe", "fpe", "vde", "ffe", "n_frames", "n_both_voiced", "n_gross",
                 "n_voicing_errors")
HOP_TOLERANCE = 1e-9


def cents_error(f_est, f_ref):
    """Interval from ``f_ref`` to ``f_est`` in cents; works elementwise."""
    f_est = np.asarray(f_est, dtype=np.float64)
    f_ref = np.asarray(f_ref, dtype=np.float64)
    if np.any(~(f_est > 0)) or np.any(~(f_ref > 0)):
        raise ValueError("frequencies must be positive")
    out = 1200.0 * np.log2(f_est / f_ref)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ErrorReport:
    """Error rates plus the counts they are built from.

    ``gpe`` and ``fpe`` are ``None`` when undefined (no both-voiced frames,
    or no non-gross frames for ``fpe``).
    """

    gpe: float | None
    fpe: float | None
    vde: float
    ffe: float
    n_frames: int
    n_both_voiced: int
    n_gross: int
    n_voicing_errors: int
    n_fine: int = 0
    fine_mean: float = 0.0
    fine_m2: float = 0.0

    def to_dict(self, stats: bool = False) -> dict:
        d = asdict(self)
        if not stats:
            for key in ("n_fine", "fine_mean", "fine_m2"):
                d.pop(key)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def csv_row(self) -> list[str]:
        return [_fmt(getattr(self, name)) for name in REPORT_FIELDS]


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.6f}"


def _build(n_frames, n_voicing, n_both, n_gross, n_fine, mean, m2) -> ErrorReport:
    gpe = n_gross / n_both if n_both else None
    fpe = math.sqrt(m2 / n_fine) if n_fine else None
    vde = n_voicing / n_frames if n_frames else 0.0
    ffe = (n_voicing + n_gross) / n_frames if n_frames else 0.0
    return ErrorReport(gpe, fpe, vde, ffe, int(n_frames), int(n_both), int(n_gross),
                       int(n_voicing), int(n_fine), float(mean), float(m2))


def _align(est: PitchContour, ref: PitchContour):
    if abs(est.hop - ref.hop) > HOP_TOLERANCE:
        raise AlignmentError(f"hop mismatch: {est.hop} s vs {ref.hop} s")
    n = min(len(est), len(ref))
    if len(est) != len(ref):
        warnings.warn(f"contour lengths differ ({len(est)} vs {len(ref)}); "
                      f"truncating to {n} frames", stacklevel=3)
    return n


def compare(est: PitchContour, ref: PitchContour, gross_threshold: float = 100.0,
            relative_threshold: float | None = None) -> ErrorReport:
    """Compare ``est`` against ``ref`` frame by frame.

    Parameters
    ----------
    gross_threshold : float
        Error in cents at or above which a both-voiced frame counts as gross.
    relative_threshold : float, optional
        If given, use the relative criterion ``|f_est / f_ref - 1| > r``
        instead of the cents threshold (0.2 is the common speech setting).
    """
    n = _align(est, ref)
    ev, rv = est.voiced[:n], ref.voiced[:n]
    n_voicing = int(np.count_nonzero(ev != rv))
    both = ev & rv
    err = 1200.0 * np.log2(est.f0[:n][both] / ref.f0[:n][both])
    if relative_threshold is None:
        gross = np.abs(err) >= gross_threshold
    else:
        ratio = est.f0[:n][both] / ref.f0[:n][both]
        gross = np.abs(ratio - 1.0) > relative_threshold
    fine = err[~gross]
    mean = float(fine.mean()) if fine.size else 0.0
    m2 = float(np.sum((fine - mean) ** 2)) if fine.size else 0.0
    return _build(n, n_voicing, int(both.sum()), int(gross.sum()), fine.size, mean, m2)


def substitute_vuv(target: PitchContour, donor: PitchContour) -> PitchContour:
    """Take voicing decisions from ``donor`` and F0 values from ``target``.

    Frames the donor calls voiced but the target did not get the F0 of the
    nearest voiced target frame (ties go left) and are marked ``filled``.
    If the target has no voiced frame at all the donor's own F0 is used.
    """
    if abs(target.hop - donor.hop) > HOP_TOLERANCE or len(target) != len(donor):
        raise AlignmentError("target and donor must share hop and length")
    voiced = donor.voiced.copy()
    f0 = np.where(voiced, target.f0, np.nan)
    filled = voiced & ~target.voiced
    idx = np.flatnonzero(target.voiced)
    need = np.flatnonzero(filled)
    if need.size:
        if idx.size:
            pos = np.searchsorted(idx, need)
            left = idx[np.clip(pos - 1, 0, idx.size - 1)]
            right = idx[np.clip(pos, 0, idx.size - 1)]
            use_left = (pos > 0) & ((pos >= idx.size) | (need - left <= right - need))
            f0[need] = target.f0[np.where(use_left, left, right)]
        else:
            f0[need] = donor.f0[need]
    score = np.where(target.voiced, target.score, donor.score)
    return PitchContour(target.hop, voiced, f0, score, filled)


def _combine(a, b):
    """Chan et al. parallel merge of (count, mean, M2)."""
    if b[0] == 0:
        return a
    if a[0] == 0:
        return b
    n = a[0] + b[0]
    delta = b[1] - a[1]
    mean = a[1] + delta * b[0] / n
    m2 = a[2] + b[2] + delta * delta * a[0] * b[0] / n
    return n, mean, m2


def pool(reports, mode: str = "frames") -> ErrorReport:
    """Pool per-file reports.

    ``mode="frames"`` sums the counts and recomputes every rate from them
    (FPE from the pooled fine-error statistics). ``mode="files"`` averages
    the per-file rates instead, skipping undefined ones; counts are still
    summed, so the count identities only hold for frame pooling.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("cannot pool an empty sequence of reports")
    if mode not in ("frames", "files"):
        raise ValueError(f"unknown pooling mode {mode!r}")
    stats = (0, 0.0, 0.0)
    for r in reports:
        stats = _combine(stats, (r.n_fine, r.fine_mean, r.fine_m2))
    total = _build(sum(r.n_frames for r in reports), sum(r.n_voicing_errors for r in reports),
                   sum(r.n_both_voiced for r in reports), sum(r.n_gross for r in reports),
                   *stats)
    if mode == "frames":
        return total

    def mean_of(name):
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        return float(np.mean(vals)) if vals else None

    return ErrorReport(mean_of("gpe"), mean_of("fpe"), mean_of("vde"), mean_of("ffe"),
                       total.n_frames, total.n_both_voiced, total.n_gross,
                       total.n_voicing_errors, total.n_fine, total.fine_mean, total.fine_m2)
