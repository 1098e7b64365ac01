"""Command-line front end: ``pitchbench {eval,optimize,groundtruth,synth,rir}``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import PitchbenchError
from .trackers import TRACKER_NAMES

log = logging.getLogger("pitchbench")


def _floats(text: str) -> tuple:
    """Comma list (``0.1,0.2``) or inclusive range ``start:stop:step``."""
    text = text.strip()
    if not text:
        return ()
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 10) for i in range(n))
    return tuple(float(v) for v in text.split(","))


def _names(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _cmd_eval(args) -> int:
    from .harness import RunPlan, run
    from .optimizer import load_config

    configs = {}
    for path in args.config or []:
        tracker, config = load_config(path)
        configs[tracker] = config
    external = {}
    for spec in args.external or []:
        name, _, directory = spec.partition("=")
        if not directory:
            raise SystemExit(f"--external expects NAME=DIR, got {spec!r}")
        external[f"external:{name}"] = directory
    trackers = _names(args.trackers) + tuple(external)
    donor = None if args.vuv_donor.lower() == "none" else args.vuv_donor
    plan = RunPlan(trackers=trackers, variants=_names(args.variants), vuv_donor=donor,
                   reverb_t60s=_floats(args.t60), group_by=_names(args.group_by),
                   external_dirs=external, configs=configs, pool_mode=args.pool,
                   jobs=args.jobs, figures=not args.no_figures)
    status = run(args.manifest, plan, args.out)
    print(f"results written to {args.out}")
    return status


def _cmd_optimize(args) -> int:
    from .optimizer import SearchSpec, default_search_spec, optimize, save_config, write_score_table

    base = default_search_spec(args.tracker)
    spec = SearchSpec(_floats(args.thresholds) or base.threshold_grid,
                      tuple(w / 1000 for w in _floats(args.windows)) or base.window_grid)
    donor = None if args.vuv_donor.lower() == "none" else args.vuv_donor
    result = optimize(args.tracker, args.manifest, spec, exhaustive=args.exhaustive,
                      vuv_donor=donor, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_score_table(out / f"{args.tracker}_scores.csv", result.table)
    save_config(out / f"{args.tracker}_config.json", args.tracker, result.config)
    for note in result.notes:
        print(note)
    print(f"{args.tracker}: threshold {result.config.voicing_threshold:g}, "
          f"window {1000 * result.config.window_length:g} ms")
    if result.exhaustive:
        ex = result.exhaustive
        print(f"exhaustive optimum: threshold {ex['threshold']:g}, "
              f"window {1000 * ex['window_length']:g} ms, FFE {ex['ffe']:.4f}")
    return 0


def _cmd_groundtruth(args) -> int:
    from .contour import write_contour
    from .groundtruth import extract_reference, flag_for_exclusion, write_exclusions
    from .signal import load_audio

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    flagged = []
    with open(out / "disagreement.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["egg_path", "disagreement", "flagged"])
        for path in args.egg:
            pair = extract_reference(load_audio(path, channel=args.channel))
            stem = Path(path).name.rsplit(".", 1)[0].removesuffix(".egg")
            write_contour(out / f"{stem}.egg.f0.csv", pair.egg_contour)
            write_contour(out / f"{stem}.degg.f0.csv", pair.degg_contour)
            flag = flag_for_exclusion(pair, args.max_disagreement)
            if flag:
                flagged.append(path)
            writer.writerow([path, f"{pair.disagreement:.6f}", int(flag)])
    write_exclusions(out / "exclusions.txt", flagged)
    print(f"{len(args.egg)} EGG files processed, {len(flagged)} flagged for review")
    return 0


def _cmd_synth(args) -> int:
    from .synthvoice import load_recipe, write_corpus

    items = load_recipe(args.recipe, sample_rate=args.sample_rate)
    manifest = write_corpus(args.out, items)
    print(f"{len(items)} items written; manifest at {manifest}")
    return 0


def _cmd_rir(args) -> int:
    from .reverb import RoomSpec, save_rir, schroeder_t60, simulate_rir

    room = RoomSpec(dimensions=_floats(args.room), source_position=_floats(args.source),
                    mic_position=_floats(args.mic), absorption_model=args.model)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t60 in _floats(args.t60):
        rir = simulate_rir(room.with_t60(t60), args.sample_rate)
        path = out / f"rir_t60={t60:g}.wav"
        save_rir(path, rir)
        print(f"{path}: {len(rir)} taps, measured T60 {schroeder_t60(rir.taps, rir.sample_rate):.3f} s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pitchbench",
                                     description="Pitch-tracker benchmarking for singing voice.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate trackers on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--trackers", default=",".join(TRACKER_NAMES))
    p.add_argument("--variants", default="default,optimized,postfiltered")
    p.add_argument("--vuv-donor", default="nccf", help="tracker lending V/UV decisions, or 'none'")
    p.add_argument("--t60", default="", help="reverberation times in seconds, e.g. 0.1,0.2")
    p.add_argument("--group-by", default="category,mechanism")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config", action="append", help="optimized config JSON (repeatable)")
    p.add_argument("--external", action="append", metavar="NAME=DIR",
                   help="import contours <DIR>/<item>.csv as tracker external:NAME")
    p.add_argument("--pool", choices=("frames", "files"), default="frames")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("optimize", help="two-stage threshold/window search")
    p.add_argument("--manifest", required=True)
    p.add_argument("--tracker", required=True, choices=TRACKER_NAMES)
    p.add_argument("--thresholds", default="", help="comma list or start:stop:step")
    p.add_argument("--windows", default="", help="window lengths in ms")
    p.add_argument("--vuv-donor", default="none")
    p.add_argument("--exhaustive", action="store_true", help="also search the full product")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("groundtruth", help="reference contours from EGG recordings")
    p.add_argument("egg", nargs="+")
    p.add_argument("--channel", type=int, default=None, help="channel index holding the EGG")
    p.add_argument("--max-disagreement", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_groundtruth)

    p = sub.add_parser("synth", help="render the synthetic test corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--recipe", default=None)
    p.add_argument("--sample-rate", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("rir", help="write simulated room impulse responses")
    p.add_argument("--t60", default="0.1,0.2,0.3,0.4,0.5")
    p.add_argument("--sample-rate", type=int, default=44100)
    p.add_argument("--room", default="3,4,5")
    p.add_argument("--source", default="1.0,1.5,1.5")
    p.add_argument("--mic", default="2.0,2.5,1.5")
    p.add_argument("--model", choices=("fitted", "eyring", "sabine"), default="fitted")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rir)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PitchbenchError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"pitchbench: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
