"""Structured token encoding for piano performances.

Each note becomes a fixed slice of four tokens — pitch, velocity, duration,
time shift — so position ``t`` in a token stream always carries channel
``t mod 4`` regardless of content.  The time shift of note ``i`` is the gap
between its onset and the next note's onset; simultaneous notes use the 0 s
token.  Durations and time shifts share one adaptive grid over [0, 20] s:

    Short   0.00 .. 0.98 s, step 0.02   (50 values)
    Medium  1.0  .. 4.9  s, step 0.1    (40 values)
    Long    5    .. 20   s, step 1      (16 values)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .midi import PITCH_MAX, PITCH_MIN, NoteEvent, Performance

CHANNELS = ("pitch", "velocity", "duration", "time_shift")
N_CHANNELS = 4

PITCH_SIZE = PITCH_MAX - PITCH_MIN + 1  # 88
VELOCITY_SIZE = 128
TIME_SIZE = 106

# sentinel values usable in raw index arrays (never inside a TokenSequence)
NC = -1     # "no constraint": position left free for generation
PAD = -2    # padding slice appended to short training chunks
START = -3  # decoder start-of-sequence symbol


class StructuredToken(NamedTuple):
    channel: str
    index: int


def _build_grid() -> np.ndarray:
    short = [round(0.02 * i, 2) for i in range(50)]
    medium = [round(1.0 + 0.1 * i, 1) for i in range(40)]
    long = [float(5 + i) for i in range(16)]
    return np.array(short + medium + long, dtype=np.float64)


class TimeQuantizer:
    """Adaptive quantizer over the 106-value duration/time-shift grid.

    ``quantize`` maps to the nearest grid value with ties resolved toward
    the smaller value; inputs above 20 s clamp to the last token.
    """

    def __init__(self):
        self.grid = _build_grid()
        self._midpoints = (self.grid[:-1] + self.grid[1:]) / 2.0

    def __len__(self) -> int:
        return len(self.grid)

    def quantize(self, seconds):
        arr = np.asarray(seconds, dtype=np.float64)
        if np.any(arr < 0):
            raise ValueError("cannot quantize negative durations")
        idx = np.searchsorted(self._midpoints, arr, side="left")
        return idx if arr.ndim else int(idx)

    def dequantize(self, index):
        arr = np.asarray(index)
        if np.any(arr < 0) or np.any(arr >= len(self.grid)):
            raise ValueError(f"token index out of range [0, {len(self.grid)})")
        out = self.grid[arr]
        return out if arr.ndim else float(out)


TIME_QUANTIZER = TimeQuantizer()


@dataclass(frozen=True)
class Alphabet:
    name: str
    values: tuple

    @property
    def size(self) -> int:
        return len(self.values)


ALPHABETS = {
    "pitch": Alphabet("pitch", tuple(range(PITCH_MIN, PITCH_MAX + 1))),
    "velocity": Alphabet("velocity", tuple(range(VELOCITY_SIZE))),
    "duration": Alphabet("duration", tuple(TIME_QUANTIZER.grid.tolist())),
    "time_shift": Alphabet("time_shift", tuple(TIME_QUANTIZER.grid.tolist())),
}

ALPHABET_SIZES = tuple(ALPHABETS[c].size for c in CHANNELS)  # (88, 128, 106, 106)


@dataclass(frozen=True)
class TokenSequence:
    """A 4T token stream stored as a (T, 4) index array.

    Column ``c`` of row ``i`` is flat position ``4 i + c`` and always holds
    channel ``CHANNELS[c]``.
    """

    indices: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.indices, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != N_CHANNELS:
            raise ValueError(f"token array must be (T, 4), got {arr.shape}")
        for c, size in enumerate(ALPHABET_SIZES):
            col = arr[:, c]
            if col.size and (col.min() < 0 or col.max() >= size):
                raise ValueError(f"{CHANNELS[c]} index outside [0, {size})")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "indices", arr)

    @property
    def note_count(self) -> int:
        return self.indices.shape[0]

    def __len__(self) -> int:
        return 4 * self.indices.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, TokenSequence) and np.array_equal(self.indices, other.indices)

    def flat(self) -> Iterator[StructuredToken]:
        for i in range(self.note_count):
            for c in range(N_CHANNELS):
                yield StructuredToken(CHANNELS[c], int(self.indices[i, c]))


def quantize_time(seconds: float) -> int:
    return TIME_QUANTIZER.quantize(seconds)


def dequantize_time(index: int) -> float:
    return TIME_QUANTIZER.dequantize(index)


def encode(performance: Performance, *, final_shift_s: float = 0.0) -> TokenSequence:
    """Tokenize a performance: one (pitch, velocity, duration, shift) slice per note.

    ``final_shift_s`` sets the last note's time-shift token, which has no
    following onset to define it; it defaults to the 0 s token and may be
    overridden when a chunk continues past this sequence.
    """
    notes = sorted(performance.notes, key=lambda n: (n.onset_s, n.pitch))
    n = len(notes)
    out = np.zeros((n, N_CHANNELS), dtype=np.int64)
    for i, note in enumerate(notes):
        if not PITCH_MIN <= note.pitch <= PITCH_MAX:
            raise ValueError(f"pitch {note.pitch} not encodable")
        shift = notes[i + 1].onset_s - note.onset_s if i + 1 < n else final_shift_s
        out[i] = (
            note.pitch - PITCH_MIN,
            note.velocity,
            TIME_QUANTIZER.quantize(note.duration_s),
            TIME_QUANTIZER.quantize(shift),
        )
    return TokenSequence(out)


MIN_DECODED_DURATION = 0.01  # half the smallest grid step; re-quantizes to token 0


def decode(tokens: TokenSequence) -> Performance:
    """Reconstruct a performance; onsets are cumulative dequantized shifts.

    The 0 s duration token decodes to MIN_DECODED_DURATION so the result is
    a valid (positive-duration) note; it re-quantizes to the same token.
    """
    idx = tokens.indices
    n = idx.shape[0]
    if n == 0:
        return Performance(())
    shifts = TIME_QUANTIZER.dequantize(idx[:, 3])
    onsets = np.concatenate([[0.0], np.cumsum(shifts[:-1])])
    durations = np.maximum(TIME_QUANTIZER.dequantize(idx[:, 2]), MIN_DECODED_DURATION)
    notes = [
        NoteEvent(
            pitch=int(idx[i, 0]) + PITCH_MIN,
            velocity=int(idx[i, 1]),
            onset_s=float(onsets[i]),
            duration_s=float(durations[i]),
        )
        for i in range(n)
    ]
    return Performance.from_notes(notes)


def elapsed_times(tokens_or_indices) -> np.ndarray:
    """Per-note elapsed seconds: cumulative sum of preceding shift tokens.

    Entry ``i`` is the onset of note ``i`` on the dequantized timeline, i.e.
    the sum of the time-shift values of notes ``0 .. i-1``.
    """
    idx = tokens_or_indices.indices if isinstance(tokens_or_indices, TokenSequence) else np.asarray(tokens_or_indices)
    if idx.shape[0] == 0:
        return np.zeros(0, dtype=np.float64)
    shifts = TIME_QUANTIZER.dequantize(np.maximum(idx[:, 3], 0))
    shifts = np.where(idx[:, 3] >= 0, shifts, 0.0)  # PAD rows contribute nothing
    return np.concatenate([[0.0], np.cumsum(shifts[:-1])])


# ---------------------------------------------------------------------------
# Text serialization: one note per line, four decimal indices
# ---------------------------------------------------------------------------

def tokens_to_text(tokens: TokenSequence) -> str:
    return "".join(f"{r[0]} {r[1]} {r[2]} {r[3]}\n" for r in tokens.indices)


def text_to_tokens(text: str) -> TokenSequence:
    rows = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"line {line_no}: expected 4 indices, got {len(parts)}")
        rows.append([int(p) for p in parts])
    return TokenSequence(np.array(rows, dtype=np.int64).reshape(-1, 4))


# ---------------------------------------------------------------------------
# Data augmentation
# ---------------------------------------------------------------------------

DILATION_RANGE = (0.9, 1.1)
VELOCITY_SHIFT_RANGE = (-20, 20)
TRANSPOSITION_RANGE = (-6, 6)


def augment_notes(notes, dilation: float, velocity_shift: int, transposition: int,
                  ) -> list[NoteEvent]:
    """Continuous-domain augmentation core shared by token- and note-level paths.

    Time dilation multiplies every value in seconds; velocity shifts clamp to
    [0, 127]; transposed notes leaving the piano range are dropped.
    """
    out = []
    for n in notes:
        pitch = n.pitch + transposition
        if not PITCH_MIN <= pitch <= PITCH_MAX:
            continue
        out.append(NoteEvent(
            pitch=pitch,
            velocity=int(np.clip(n.velocity + velocity_shift, 0, 127)),
            onset_s=n.onset_s * dilation,
            duration_s=n.duration_s * dilation,
        ))
    return out


def draw_augmentation(rng: np.random.Generator) -> tuple[float, int, int]:
    dilation = rng.uniform(*DILATION_RANGE)
    velocity_shift = int(rng.integers(VELOCITY_SHIFT_RANGE[0], VELOCITY_SHIFT_RANGE[1] + 1))
    transposition = int(rng.integers(TRANSPOSITION_RANGE[0], TRANSPOSITION_RANGE[1] + 1))
    return dilation, velocity_shift, transposition


def augment(tokens: TokenSequence, rng: np.random.Generator) -> TokenSequence:
    """Randomly dilate/shift/transpose a token sequence, re-quantizing times.

    The transform runs on the dequantized continuous values, so identity
    parameters reproduce the input exactly.
    """
    dilation, velocity_shift, transposition = draw_augmentation(rng)
    perf = decode(tokens)
    final_shift = 0.0
    if tokens.note_count:
        final_shift = dequantize_time(int(tokens.indices[-1, 3])) * dilation
    notes = augment_notes(perf.notes, dilation, velocity_shift, transposition)
    return encode(Performance.from_notes(notes), final_shift_s=min(final_shift, 20.0))
