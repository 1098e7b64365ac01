"""Two-stage grid search over voicing threshold and window length.

Stage 1 picks the threshold minimizing pooled VDE at the default window.
Stage 2 picks the window minimizing pooled FFE at that threshold. Ties go to
the smaller threshold and the shorter window. For trackers whose voicing
decision is a plain ``score >= threshold`` test, each window is analysed
once and every threshold is derived from that run.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .contour import PitchContour
from .dataset import DatasetItem, load_dataset
from .errors import PitchbenchError
from .metrics import compare, pool, substitute_vuv
from .trackers import THRESHOLD_TUNABLE, TRACKERS, TrackerConfig, preset

logger = logging.getLogger(__name__)

SCORE_COLUMNS = ("stage", "param_value", "vde", "ffe", "gpe", "fpe")
DEFAULT_WINDOWS = (0.010, 0.016, 0.025, 0.050, 0.075, 0.100, 0.125, 0.150)
SPECTRAL_THRESHOLDS = tuple(round(0.02 + 0.01 * i, 2) for i in range(59))
CORRELATION_THRESHOLDS = tuple(round(0.05 * i, 2) for i in range(1, 19))


class OptimizationError(PitchbenchError):
    """A tracker failed on a dataset file during the search."""


@dataclass(frozen=True)
class SearchSpec:
    threshold_grid: tuple
    window_grid: tuple
    objective_stage1: str = "vde"
    objective_stage2: str = "ffe"

    def __post_init__(self):
        for name in ("threshold_grid", "window_grid"):
            grid = tuple(float(v) for v in getattr(self, name))
            if not grid:
                raise ValueError(f"{name} must not be empty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, grid)
        if (self.objective_stage1, self.objective_stage2) != ("vde", "ffe"):
            raise ValueError("objectives are fixed: VDE for stage 1, FFE for stage 2")


def default_search_spec(tracker: str) -> SearchSpec:
    thresholds = SPECTRAL_THRESHOLDS if tracker in ("srh", "ssh") else CORRELATION_THRESHOLDS
    return SearchSpec(thresholds, DEFAULT_WINDOWS)


@dataclass(frozen=True)
class ScoreRow:
    stage: str
    param_value: float
    vde: float
    ffe: float
    gpe: float | None
    fpe: float | None

    def csv_row(self) -> list[str]:
        fmt = lambda v: "NA" if v is None else f"{v:.6f}"
        return [self.stage, f"{self.param_value:g}", fmt(self.vde), fmt(self.ffe),
                fmt(self.gpe), fmt(self.fpe)]


@dataclass
class OptimizationResult:
    config: TrackerConfig
    table: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    exhaustive: dict | None = None


def write_score_table(path, rows: Sequence[ScoreRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SCORE_COLUMNS)
        for row in rows:
            writer.writerow(row.csv_row())


def _resolve(tracker) -> tuple[str, Callable]:
    if callable(tracker):
        return getattr(tracker, "__name__", "custom"), tracker
    try:
        return tracker, TRACKERS[tracker]
    except KeyError:
        raise KeyError(f"unknown tracker {tracker!r}") from None


def _run_one(args):
    fn, item, config = args
    try:
        return fn(item.audio, config)
    except Exception as exc:  # noqa: BLE001 - reported with the file name
        raise OptimizationError(f"tracker failed on {item.item_id}: {exc}") from exc


def _threshold(contour: PitchContour, threshold: float) -> PitchContour:
    keep = contour.voiced & (contour.score >= threshold)
    return PitchContour(contour.hop, keep, contour.f0, contour.score)


class _Evaluator:
    def __init__(self, fn, dataset, donors, sweepable, jobs):
        self.fn, self.dataset, self.donors = fn, dataset, donors
        self.sweepable, self.jobs = sweepable, jobs
        self._cache = {}

    def _contours(self, config):
        key = config if not self.sweepable else config.replace(voicing_threshold=0.0)
        if key not in self._cache:
            work = [(self.fn, item, key) for item in self.dataset]
            if self.jobs > 1:
                with ProcessPoolExecutor(self.jobs) as ex:
                    self._cache[key] = list(ex.map(_run_one, work))
            else:
                self._cache[key] = [_run_one(w) for w in work]
        return self._cache[key]

    def score(self, config):
        reports = []
        for i, (item, est) in enumerate(zip(self.dataset, self._contours(config))):
            if self.sweepable:
                est = _threshold(est, config.voicing_threshold)
            if self.donors is not None:
                est = substitute_vuv(est, self.donors[i])
            reports.append(compare(est, item.reference))
        return pool(reports)


def _pick(rows, values, key):
    """Index of the minimal objective; the earliest (smallest) value wins ties."""
    scores = [getattr(r, key) for r in rows]
    best = min(range(len(values)), key=lambda i: (scores[i], values[i]))
    return best


def optimize(tracker, dataset, spec: SearchSpec | None = None,
             default_config: TrackerConfig | None = None, *, exhaustive: bool = False,
             vuv_donor: str | None = None, tunable: bool | None = None,
             jobs: int = 1) -> OptimizationResult:
    """Tune ``tracker`` on ``dataset`` (a manifest path or loaded items).

    Parameters
    ----------
    tracker : str or callable
        A registered tracker name, or a function ``(Signal, TrackerConfig)
        -> PitchContour``.
    exhaustive : bool
        Also evaluate the full threshold x window product and report the
        FFE-optimal pair in ``result.exhaustive``.
    vuv_donor : str, optional
        Tracker whose voicing replaces the tuned tracker's before scoring.
    tunable : bool, optional
        Whether stage 1 runs; defaults to membership in ``THRESHOLD_TUNABLE``
        for named trackers and to ``True`` for callables.
    """
    name, fn = _resolve(tracker)
    if not isinstance(dataset, (list, tuple)):
        dataset = load_dataset(dataset)
    dataset = list(dataset)
    if not dataset:
        raise ValueError("dataset is empty")
    spec = spec or default_search_spec(name)
    if default_config is None:
        default_config = preset(name, "default") if name in TRACKERS else TrackerConfig()
    if tunable is None:
        tunable = name in THRESHOLD_TUNABLE if name in TRACKERS else True
    sweepable = name in THRESHOLD_TUNABLE and not callable(tracker) and min(spec.threshold_grid) > 0

    donors = None
    if vuv_donor is not None:
        donor_cfg = preset(vuv_donor, "optimized")
        donors = [_run_one((TRACKERS[vuv_donor], item, donor_cfg)) for item in dataset]
    ev = _Evaluator(fn, dataset, donors, sweepable and tunable, jobs)
    result = OptimizationResult(default_config)

    def row(stage, value, cfg):
        rep = ev.score(cfg)
        return ScoreRow(stage, value, rep.vde, rep.ffe, rep.gpe, rep.fpe)

    threshold = default_config.voicing_threshold
    if tunable:
        rows = [row("threshold", t, default_config.replace(voicing_threshold=t))
                for t in spec.threshold_grid]
        threshold = spec.threshold_grid[_pick(rows, spec.threshold_grid, "vde")]
        result.table.extend(rows)
    else:
        note = f"{name}: voicing threshold is not tuned; stage 1 skipped"
        logger.info(note)
        result.notes.append(note)

    windows = sorted(set(spec.window_grid) | {default_config.window_length})
    rows = [row("window", w, default_config.replace(voicing_threshold=threshold, window_length=w))
            for w in windows]
    window = windows[_pick(rows, windows, "ffe")]
    result.table.extend(rows)
    result.config = default_config.replace(voicing_threshold=threshold, window_length=window)

    if exhaustive:
        thresholds = spec.threshold_grid if tunable else (threshold,)
        grid = []
        for w in windows:
            for t in thresholds:
                rep = ev.score(default_config.replace(voicing_threshold=t, window_length=w))
                grid.append(((rep.ffe, t, w), t, w, rep))
        best = min(grid, key=lambda g: g[0])
        result.exhaustive = {"threshold": best[1], "window_length": best[2], "ffe": best[3].ffe,
                             "table": [(t, w, rep.vde, rep.ffe) for _, t, w, rep in grid]}
    return result


def save_config(path, tracker: str, config: TrackerConfig) -> None:
    with open(path, "w") as fh:
        json.dump({"tracker": tracker, "config": asdict(config)}, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_config(path) -> tuple[str, TrackerConfig]:
    with open(path) as fh:
        doc = json.load(fh)
    try:
        return doc["tracker"], TrackerConfig(**doc["config"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: not a tracker config file ({exc})") from None
