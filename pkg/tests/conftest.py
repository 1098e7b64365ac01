import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pitchbench.synthvoice import CorpusItem, VoiceSpec, glissando, silence, sustain, write_corpus  # noqa: E402


def _small_items():
    plan = [("bari", "baritone", "M1", 130.0), ("ct", "countertenor", "M2", 350.0),
            ("sop", "soprano", "M2", 520.0)]
    items = []
    for k, (name, reg, mech, f0) in enumerate(plan):
        spec = VoiceSpec(segments=(silence(0.1), sustain(f0, 0.3, 5.5, 40.0),
                                   glissando(f0, f0 * 1.25, 0.25), silence(0.1)),
                         register=reg, mechanism=mech, sample_rate=16000, seed=k)
        items.append(CorpusItem(f"{name}_{k}", spec, f"s{k}", "mixed"))
    return items


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Three short items, one per category, written as WAV plus truth CSV."""
    return write_corpus(tmp_path_factory.mktemp("small"), _small_items())
