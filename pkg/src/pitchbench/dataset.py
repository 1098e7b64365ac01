"""Manifest files and the audio/reference pairs they describe."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .contour import PitchContour, read_contour
from .errors import ParseError
from .signal import Signal, load_audio

MANIFEST_COLUMNS = ("audio_path", "reference_path", "singer_id", "category", "mechanism", "exercise")
CATEGORIES = ("baritone", "countertenor", "soprano", "other")
MECHANISMS = ("M1", "M2", "unknown")


@dataclass(frozen=True)
class ManifestEntry:
    audio_path: Path
    reference_path: Path
    singer_id: str
    category: str
    mechanism: str
    exercise: str

    @property
    def item_id(self) -> str:
        return self.audio_path.stem


@dataclass(eq=False)
class DatasetItem:
    item_id: str
    audio: Signal
    reference: PitchContour
    entry: ManifestEntry | None = None


def read_manifest(path) -> list[ManifestEntry]:
    """Parse a manifest CSV; relative paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    entries = []
    with open(path, newline="") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1)
                if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise ParseError(f"{path}: empty manifest", 1)
    header_line, header = rows[0]
    header = [h.strip() for h in header]
    missing = [c for c in MANIFEST_COLUMNS if c not in header]
    if missing:
        raise ParseError(f"{path}:{header_line}: missing columns {missing}", header_line)
    for line_no, row in rows[1:]:
        if len(row) != len(header):
            raise ParseError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}",
                             line_no)
        rec = {k: v.strip() for k, v in zip(header, row)}
        if rec["category"] not in CATEGORIES:
            raise ParseError(f"{path}:{line_no}: unknown category {rec['category']!r}", line_no)
        if rec["mechanism"] not in MECHANISMS:
            raise ParseError(f"{path}:{line_no}: unknown mechanism {rec['mechanism']!r}", line_no)
        entries.append(ManifestEntry(
            audio_path=base / rec["audio_path"],
            reference_path=base / rec["reference_path"],
            singer_id=rec["singer_id"], category=rec["category"],
            mechanism=rec["mechanism"], exercise=rec["exercise"]))
    return entries


def load_item(entry: ManifestEntry, hop: float | None = None) -> DatasetItem:
    audio = load_audio(entry.audio_path)
    reference = read_contour(entry.reference_path, hop=hop)
    return DatasetItem(entry.item_id, audio, reference, entry)


def load_dataset(manifest) -> list[DatasetItem]:
    """Load every manifest item; missing files raise ``FileNotFoundError``."""
    return [load_item(e) for e in read_manifest(manifest)]
