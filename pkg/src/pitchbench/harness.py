"""Batch evaluation: trackers x variants x conditions over a manifest.

Each (file, condition) pair is one work unit that runs every requested
tracker and variant. Units may execute in worker processes, but results are
assembled in manifest order so every output file is byte-stable.
"""
from __future__ import annotations

import csv
import functools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .contour import PitchContour, read_contour
from .dataset import CATEGORIES, MECHANISMS, read_manifest
from .errors import PitchbenchError
from .metrics import REPORT_FIELDS, ErrorReport, compare, pool, substitute_vuv
from .postfilter import PostFilterConfig, postprocess
from .reverb import RoomSpec, convolve, simulate_rir
from .signal import load_audio
from .trackers import TRACKER_NAMES, TrackerConfig, import_external_contour, preset, run_tracker

logger = logging.getLogger(__name__)

SCHEMA = 1
VARIANTS = ("default", "optimized", "postfiltered")
GROUP_KEYS = ("category", "mechanism", "t60")
DONOR_TARGETS = frozenset({"yin"})
RESULT_COLUMNS = ("tracker", "variant", "label", "condition", "group", "n_files") + REPORT_FIELDS


def condition_name(t60: float | None) -> str:
    return "clean" if t60 is None else f"t60={t60:g}"


def is_external(tracker: str) -> bool:
    return tracker.startswith("external:")


@dataclass(frozen=True)
class RunPlan:
    """What to evaluate.

    ``configs`` overrides the optimized configuration per tracker and
    ``external_dirs`` maps ``external:<name>`` trackers to the directory
    holding their contours (``<item_id>.csv``, with reverberant conditions
    in ``t60=<value>/`` subdirectories).
    """

    trackers: tuple = TRACKER_NAMES
    variants: tuple = VARIANTS
    vuv_donor: str | None = "nccf"
    reverb_t60s: tuple = ()
    group_by: tuple = ("category", "mechanism")
    external_dirs: dict = field(default_factory=dict)
    configs: dict = field(default_factory=dict)
    postfilter: PostFilterConfig = field(default_factory=PostFilterConfig)
    pool_mode: str = "frames"
    room: RoomSpec = field(default_factory=RoomSpec)
    jobs: int = 1
    figures: bool = True

    def validate(self) -> None:
        if not self.trackers:
            raise ValueError("plan needs at least one tracker")
        for t in self.trackers:
            if is_external(t):
                if t not in self.external_dirs:
                    raise ValueError(f"{t} has no import directory")
            elif t not in TRACKER_NAMES:
                raise ValueError(f"unknown tracker {t!r}")
        if not self.variants or any(v not in VARIANTS for v in self.variants):
            raise ValueError(f"variants must be a non-empty subset of {VARIANTS}")
        if self.vuv_donor is not None and self.vuv_donor not in TRACKER_NAMES:
            raise ValueError(f"unknown V/UV donor {self.vuv_donor!r}")
        if any(t <= 0 for t in self.reverb_t60s):
            raise ValueError("T60 values must be positive")
        if any(g not in GROUP_KEYS for g in self.group_by):
            raise ValueError(f"group_by must be a subset of {GROUP_KEYS}")
        if self.pool_mode not in ("frames", "files"):
            raise ValueError("pool_mode must be 'frames' or 'files'")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @property
    def conditions(self) -> tuple:
        return (None,) + tuple(sorted(self.reverb_t60s))

    def uses_donor(self, tracker: str) -> bool:
        return self.vuv_donor is not None and (tracker in DONOR_TARGETS or is_external(tracker))

    def label(self, tracker: str, variant: str) -> str:
        name = tracker.split(":", 1)[1] if is_external(tracker) else tracker
        return (name + ("v" if self.uses_donor(tracker) else "")
                + ("u" if variant == "default" else "") + ("*" if variant == "postfiltered" else ""))

    def config_for(self, tracker: str, variant: str) -> TrackerConfig:
        if variant == "default":
            return preset(tracker, "default")
        return self.configs.get(tracker) or preset(tracker, "optimized")

    def describe(self) -> dict:
        return {
            "trackers": list(self.trackers), "variants": list(self.variants),
            "vuv_donor": self.vuv_donor, "reverb_t60s": [float(t) for t in sorted(self.reverb_t60s)],
            "group_by": list(self.group_by), "pool_mode": self.pool_mode,
            "postfilter": asdict(self.postfilter),
            "room": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.room).items()},
            "configs": {t: asdict(self.config_for(t, "optimized"))
                        for t in self.trackers if not is_external(t)},
        }


@dataclass
class RunResult:
    rows: list
    files: list
    skipped: list
    errors: list

    @property
    def exit_status(self) -> int:
        return 1 if self.errors else 0


@functools.lru_cache(maxsize=16)
def _rir(room: RoomSpec, sample_rate: int):
    return simulate_rir(room, sample_rate)


def _external_contour(directory, item_id: str, t60, hop: float) -> PitchContour:
    base = Path(directory)
    if t60 is not None:
        base = base / condition_name(t60)
    return import_external_contour(base / f"{item_id}.csv", hop)


def _fit_length(contour: PitchContour, n: int) -> PitchContour:
    if len(contour) == n:
        return contour
    if len(contour) > n:
        return PitchContour(contour.hop, contour.voiced[:n], contour.f0[:n], contour.score[:n])
    pad = n - len(contour)
    return PitchContour(contour.hop, np.r_[contour.voiced, np.zeros(pad, bool)],
                        np.r_[contour.f0, np.full(pad, np.nan)], np.r_[contour.score, np.zeros(pad)])


def _evaluate_unit(args):
    """Run every tracker/variant on one file under one condition."""
    entry, t60, plan = args
    out = []
    try:
        reference = read_contour(entry.reference_path)
        audio = load_audio(entry.audio_path)
        if t60 is not None:
            audio = convolve(audio, _rir(plan.room.with_t60(t60), audio.sample_rate))
    except (OSError, PitchbenchError, ValueError) as exc:
        reason = f"error: {exc}"
        return [(t, v, None, reason) for t in plan.trackers for v in plan.variants]

    cache = {}

    def track(name, config):
        key = (name, config)
        if key not in cache:
            cache[key] = run_tracker(name, audio, config)
        return cache[key]

    donor = None
    for tracker in plan.trackers:
        for variant in plan.variants:
            try:
                if is_external(tracker):
                    contour = _external_contour(plan.external_dirs[tracker], entry.item_id, t60,
                                                reference.hop)
                else:
                    contour = track(tracker, plan.config_for(tracker, variant))
                if plan.uses_donor(tracker):
                    if donor is None:
                        donor = track(plan.vuv_donor, plan.config_for(plan.vuv_donor, "optimized"))
                    contour = substitute_vuv(_fit_length(contour, len(donor)), donor)
                if variant == "postfiltered":
                    contour = postprocess(contour, plan.postfilter)
                report = compare(_fit_length(contour, len(reference)), reference)
                out.append((tracker, variant, report, None))
            except Exception as exc:  # noqa: BLE001 - recorded per file, run continues
                out.append((tracker, variant, None, f"error: {type(exc).__name__}: {exc}"))
    return out


def _relpath(path: Path, base: Path) -> str:
    return Path(os.path.relpath(path, base)).as_posix()


def _groups(entries, plan):
    groups = [("all", list(range(len(entries))))]
    for key, vocab in (("category", CATEGORIES), ("mechanism", MECHANISMS)):
        if key not in plan.group_by:
            continue
        for value in vocab:
            idx = [i for i, e in enumerate(entries) if getattr(e, key) == value]
            if idx:
                groups.append((f"{key}={value}", idx))
    return groups


def evaluate(manifest, plan: RunPlan) -> RunResult:
    """Evaluate ``plan`` on ``manifest`` and return rows, per-file details and skips."""
    plan.validate()
    manifest = Path(manifest)
    base = manifest.parent
    entries = read_manifest(manifest)
    skipped, errors = [], []
    runnable = []
    for entry in entries:
        missing = [p for p in (entry.reference_path, entry.audio_path) if not p.exists()]
        if missing:
            what = "reference" if missing[0] == entry.reference_path else "audio"
            reason = f"missing {what}: {_relpath(missing[0], base)}"
            for cond in plan.conditions:
                for t in plan.trackers:
                    for v in plan.variants:
                        skipped.append({"audio_path": _relpath(entry.audio_path, base), "tracker": t,
                                        "variant": v, "condition": condition_name(cond),
                                        "reason": reason})
        else:
            runnable.append(entry)

    units = [(e, cond, plan) for cond in plan.conditions for e in runnable]
    if plan.jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(plan.jobs) as ex:
            outcomes = list(ex.map(_evaluate_unit, units))
    else:
        outcomes = [_evaluate_unit(u) for u in units]

    reports = {}
    files = []
    for (entry, cond, _), outcome in zip(units, outcomes):
        for tracker, variant, report, reason in outcome:
            record = {"audio_path": _relpath(entry.audio_path, base), "tracker": tracker,
                      "variant": variant, "condition": condition_name(cond)}
            if report is None:
                skipped.append({**record, "reason": reason})
                errors.append({**record, "reason": reason})
                continue
            reports[(tracker, variant, cond, entry.audio_path)] = report
            files.append({**record, "item_id": entry.item_id, "category": entry.category,
                          "mechanism": entry.mechanism, "report": report.to_dict(stats=True)})

    order = {(t, v, c): k for k, (t, v, c) in enumerate(
        (t, v, c) for t in plan.trackers for v in plan.variants for c in plan.conditions)}
    files.sort(key=lambda f: order[(f["tracker"], f["variant"],
                                    _condition_value(f["condition"]))])

    rows = []
    groups = _groups(runnable, plan)
    for tracker in plan.trackers:
        for variant in plan.variants:
            for cond in plan.conditions:
                for group, idx in groups:
                    selected = [reports[(tracker, variant, cond, runnable[i].audio_path)]
                                for i in idx if (tracker, variant, cond, runnable[i].audio_path) in reports]
                    pooled = pool(selected, plan.pool_mode) if selected else None
                    rows.append({"tracker": tracker, "variant": variant,
                                 "label": plan.label(tracker, variant),
                                 "condition": condition_name(cond), "group": group,
                                 "n_files": len(selected), "report": pooled})
    return RunResult(rows, files, skipped, errors)


def _condition_value(name: str):
    return None if name == "clean" else float(name.split("=", 1)[1])


def _write_results_csv(path, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SCHEMA}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            report = row["report"]
            values = report.csv_row() if report else ["NA"] * len(REPORT_FIELDS)
            writer.writerow([row["tracker"], row["variant"], row["label"], row["condition"],
                             row["group"], row["n_files"], *values])


def _write_json(path, plan, result):
    doc = {
        "schema": SCHEMA,
        "plan": plan.describe(),
        "rows": [{**{k: v for k, v in r.items() if k != "report"},
                  "report": r["report"].to_dict() if r["report"] else None} for r in result.rows],
        "files": result.files,
        "skipped": result.skipped,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, allow_nan=False)
        fh.write("\n")


def _write_skipped(path, skipped):
    with open(path, "w") as fh:
        fh.write("# audio_path\ttracker\tvariant\tcondition\treason\n")
        for s in skipped:
            fh.write("\t".join([s["audio_path"], s["tracker"], s["variant"], s["condition"],
                                s["reason"].replace("\t", " ").replace("\n", " ")]) + "\n")


def figure_variant(plan: RunPlan) -> str:
    for v in ("postfiltered", "optimized", "default"):
        if v in plan.variants:
            return v
    raise ValueError("plan has no variants")


def plot_tables(plan: RunPlan, result: RunResult) -> dict:
    """Per-tracker tables behind the three figures, from the per-file details."""
    variant = figure_variant(plan)
    by_key = {}
    for f in result.files:
        if f["variant"] == variant:
            by_key.setdefault((f["tracker"], f["condition"]), []).append(f)

    def pooled(tracker, condition, metric, **match):
        sel = [ErrorReport.from_dict(f["report"]) for f in by_key.get((tracker, condition), [])
               if all(f[k] == v for k, v in match.items())]
        return getattr(pool(sel, plan.pool_mode), metric) if sel else None

    categories = [c for c in CATEGORIES if any(f["category"] == c for f in result.files)]
    mechanisms = [m for m in MECHANISMS if any(f["mechanism"] == m for f in result.files)]
    t60s = [condition_name(t) for t in sorted(plan.reverb_t60s)]
    tables = {"gpe_by_category": (categories, []), "fpe_by_mechanism": (mechanisms, []),
              "gpe_by_t60": ([f"{t:g}" for t in sorted(plan.reverb_t60s)], [])}
    for tracker in plan.trackers:
        label = plan.label(tracker, variant)
        tables["gpe_by_category"][1].append(
            {"label": label, **{c: pooled(tracker, "clean", "gpe", category=c) for c in categories}})
        tables["fpe_by_mechanism"][1].append(
            {"label": label, **{m: pooled(tracker, "clean", "fpe", mechanism=m) for m in mechanisms}})
        if t60s:
            tables["gpe_by_t60"][1].append(
                {"label": label, **{f"{_condition_value(c):g}": pooled(tracker, c, "gpe") for c in t60s}})
    if not t60s:
        del tables["gpe_by_t60"]
    return tables


def _write_table(path, columns, table):
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SCHEMA}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["tracker", *columns])
        for row in table:
            writer.writerow([row["label"], *("NA" if row[c] is None else f"{row[c]:.6f}"
                                             for c in columns)])


def _render(out, tables):
    from . import plotting

    pct = lambda table: [{"label": r["label"], **{k: (None if v is None else 100 * v)
                                                  for k, v in r.items() if k != "label"}}
                         for r in table]
    cols, table = tables["gpe_by_category"]
    plotting.bar_chart(out / "gpe_by_category.svg", pct(table), cols, "GPE (%)",
                       "Gross pitch error by singer category")
    cols, table = tables["fpe_by_mechanism"]
    plotting.bar_chart(out / "fpe_by_mechanism.svg", table, cols, "FPE (cents)",
                       "Fine pitch error by laryngeal mechanism")
    if "gpe_by_t60" in tables:
        cols, table = tables["gpe_by_t60"]
        plotting.line_chart(out / "gpe_by_t60.svg", pct(table), cols, [1000 * float(c) for c in cols],
                            "T60 (ms)", "GPE (%)", "Gross pitch error under reverberation")


def write_outputs(out_dir, plan: RunPlan, result: RunResult) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_results_csv(out / "results.csv", result.rows)
    _write_json(out / "results.json", plan, result)
    _write_skipped(out / "skipped.txt", result.skipped)
    tables = plot_tables(plan, result)
    for name, (columns, table) in tables.items():
        _write_table(out / f"{name}.csv", columns, table)
    if plan.figures:
        _render(out, tables)


def run(manifest, plan: RunPlan, out_dir) -> int:
    """Evaluate, write every output file and return the exit status.

    Status is 0 when every tracker ran on every available file and 1 when
    some tracker failed somewhere (failures are listed in ``skipped.txt``).
    Items without a reference are skipped but do not change the status.
    """
    result = evaluate(manifest, plan)
    write_outputs(out_dir, plan, result)
    for e in result.errors:
        logger.error("%s %s %s %s: %s", e["audio_path"], e["tracker"], e["variant"],
                     e["condition"], e["reason"])
    return result.exit_status
