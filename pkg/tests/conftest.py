from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # smf_oracle import

from pianofill.midi import NoteEvent, Performance


def random_performance(rng: np.random.Generator, n_notes: int,
                       max_gap_s: float = 2.0) -> Performance:
    """Random but physically valid performance; occasional chords via zero gaps.

    The same key never overlaps itself (as on a real piano); overlapping
    same-pitch notes are not representable unambiguously in SMF.
    """
    onset = 0.0
    raw = []
    for _ in range(n_notes):
        raw.append([int(rng.integers(21, 109)), int(rng.integers(1, 128)),
                    onset, float(rng.uniform(0.02, 6.0))])
        if rng.random() > 0.2:  # 20% chords
            onset += float(rng.uniform(0.01, max_gap_s))
    # truncate same-pitch overlaps, drop same-pitch unisons
    seen: dict[int, list] = {}
    notes = []
    for note in sorted(raw, key=lambda n: n[2]):
        prev = seen.get(note[0])
        if prev is not None:
            if prev[2] == note[2]:
                continue
            prev[3] = min(prev[3], note[2] - prev[2])
        seen[note[0]] = note
        notes.append(note)
    return Performance.from_notes(NoteEvent(*n) for n in notes)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.Philox(1234))
