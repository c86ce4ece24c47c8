"""Standard MIDI File reading/writing and the note-level domain types.

The parser is self-contained (no third-party MIDI dependency) and handles:

- format 0 and format 1 files, metrical and SMPTE divisions,
- tempo maps (tick times converted to wall-clock seconds),
- running status, meta and sysex events,
- note-on with velocity 0 treated as note-off,
- optional sustain-pedal (CC64) extension of note durations.

Notes outside the 88-key piano range [21, 108] are discarded.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

PITCH_MIN = 21
PITCH_MAX = 108

DEFAULT_TEMPO_US = 500_000  # microseconds per quarter note (120 BPM)
WRITE_TICKS_PER_QUARTER = 480


class MidiParseError(ValueError):
    """Raised on malformed SMF content; carries the offending byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnclosedNoteWarning(UserWarning):
    """A note-on without a matching note-off was closed at end of track."""


@dataclass(frozen=True, slots=True)
class NoteEvent:
    """One piano note with continuous-time attributes."""

    pitch: int
    velocity: int
    onset_s: float
    duration_s: float

    def __post_init__(self):
        if not PITCH_MIN <= self.pitch <= PITCH_MAX:
            raise ValueError(f"pitch {self.pitch} outside [{PITCH_MIN}, {PITCH_MAX}]")
        if not 0 <= self.velocity <= 127:
            raise ValueError(f"velocity {self.velocity} outside [0, 127]")
        if self.onset_s < 0:
            raise ValueError(f"onset_s {self.onset_s} is negative")
        if self.duration_s <= 0:
            raise ValueError(f"duration_s {self.duration_s} is not positive")


@dataclass(frozen=True)
class Performance:
    """An ordered piano performance.

    Notes are sorted by onset, ties broken by ascending pitch, so that
    downstream tokenization is deterministic.
    """

    notes: tuple[NoteEvent, ...]

    @classmethod
    def from_notes(cls, notes) -> "Performance":
        return cls(tuple(sorted(notes, key=lambda n: (n.onset_s, n.pitch))))

    def __len__(self) -> int:
        return len(self.notes)

    def __iter__(self):
        return iter(self.notes)

    @property
    def duration_s(self) -> float:
        """Time from 0 to the last sounding note end."""
        if not self.notes:
            return 0.0
        return max(n.onset_s + n.duration_s for n in self.notes)

    @property
    def end_onset_s(self) -> float:
        return self.notes[-1].onset_s if self.notes else 0.0


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

class _Reader:
    """Byte cursor with the primitive SMF read operations."""

    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def u8(self) -> int:
        if self.pos >= len(self.data):
            raise MidiParseError("unexpected end of data", self.pos)
        b = self.data[self.pos]
        self.pos += 1
        return b

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MidiParseError(f"truncated: wanted {n} bytes", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def vlq(self) -> int:
        """Variable-length quantity, at most 4 bytes per the SMF spec."""
        value = 0
        for i in range(4):
            b = self.u8()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MidiParseError("variable-length quantity exceeds 4 bytes", self.pos)


# raw event kinds used between track parsing and note assembly
_NOTE_ON = 0
_NOTE_OFF = 1
_PEDAL = 2
_TEMPO = 3
_EOT = 4


def _parse_track(r: _Reader, length: int, track_no: int) -> list[tuple[int, int, int, tuple]]:
    """Return [(abs_tick, track_no, kind, payload)] for one MTrk body."""
    end = r.pos + length
    events: list[tuple[int, int, int, tuple]] = []
    tick = 0
    status = None
    while r.pos < end:
        tick += r.vlq()
        if r.pos >= len(r.data):
            raise MidiParseError("track ran past end of data", r.pos)
        b = r.data[r.pos]
        if b >= 0x80:
            status = r.u8()
        elif status is None:
            raise MidiParseError(f"data byte {b:#x} with no running status", r.pos)

        if status == 0xFF:
            meta_type = r.u8()
            meta_len = r.vlq()
            payload = r.take(meta_len)
            status = None  # meta events cancel running status
            if meta_type == 0x51:
                if meta_len != 3:
                    raise MidiParseError("tempo meta event must carry 3 bytes", r.pos)
                us = (payload[0] << 16) | (payload[1] << 8) | payload[2]
                events.append((tick, track_no, _TEMPO, (us,)))
            elif meta_type == 0x2F:
                events.append((tick, track_no, _EOT, ()))
                break
        elif status in (0xF0, 0xF7):
            sysex_len = r.vlq()
            r.take(sysex_len)
            status = None
        elif status >= 0xF0:
            raise MidiParseError(f"unsupported system message {status:#x}", r.pos)
        else:
            kind = status & 0xF0
            channel = status & 0x0F
            d1 = r.u8()
            d2 = r.u8() if kind not in (0xC0, 0xD0) else 0
            if kind == 0x90 and d2 > 0:
                events.append((tick, track_no, _NOTE_ON, (channel, d1, d2)))
            elif kind == 0x80 or (kind == 0x90 and d2 == 0):
                events.append((tick, track_no, _NOTE_OFF, (channel, d1)))
            elif kind == 0xB0 and d1 == 64:
                events.append((tick, track_no, _PEDAL, (channel, d2 >= 64)))
    if r.pos > end:
        raise MidiParseError("track events ran past declared chunk length", r.pos)
    r.pos = end
    if not events or events[-1][2] != _EOT:
        events.append((tick, track_no, _EOT, ()))
    return events


def _tick_to_seconds_map(events, division: int):
    """Build tick -> seconds conversion given merged, tick-sorted events."""
    if division & 0x8000:
        # SMPTE division: wall-clock, tempo-independent
        fps = 256 - ((division >> 8) & 0xFF)  # two's complement of high byte
        ticks_per_frame = division & 0xFF
        rate = 1.0 / (fps * ticks_per_frame)
        return lambda tick: tick * rate

    tpq = division & 0x7FFF
    if tpq == 0:
        raise MidiParseError("zero ticks-per-quarter division", 12)
    tempi = [(0, DEFAULT_TEMPO_US)]
    for tick, _track, kind, payload in events:
        if kind == _TEMPO:
            tempi.append((tick, payload[0]))
    # cumulative seconds at each tempo-change tick
    anchors = []
    sec = 0.0
    prev_tick, prev_us = tempi[0]
    anchors.append((prev_tick, sec, prev_us))
    for tick, us in tempi[1:]:
        sec += (tick - prev_tick) * prev_us / (tpq * 1e6)
        anchors.append((tick, sec, us))
        prev_tick, prev_us = tick, us

    def convert(tick: int) -> float:
        lo = 0
        for atick, asec, aus in anchors:
            if atick <= tick:
                lo_tick, lo_sec, lo_us = atick, asec, aus
            else:
                break
        return lo_sec + (tick - lo_tick) * lo_us / (tpq * 1e6)

    return convert


def parse_midi(data: bytes, *, sustain_pedal: bool = True) -> Performance:
    """Parse a format 0/1 Standard MIDI File into a Performance.

    Times are wall-clock seconds with the file's tempo map applied.  When
    ``sustain_pedal`` is set (the default), a held CC64 pedal extends
    sounding notes until the pedal is released.
    """
    r = _Reader(data)
    if r.take(4) != b"MThd":
        raise MidiParseError("missing MThd header", 0)
    header_len = struct.unpack(">I", r.take(4))[0]
    if header_len < 6:
        raise MidiParseError(f"MThd length {header_len} < 6", 4)
    fmt, ntrks, division = struct.unpack(">HHH", r.take(6))
    r.take(header_len - 6)
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported SMF format {fmt}", 8)

    events: list[tuple[int, int, int, tuple]] = []
    track_no = 0
    while track_no < ntrks and r.pos < len(r.data):
        chunk_start = r.pos
        chunk_type = r.take(4)
        chunk_len = struct.unpack(">I", r.take(4))[0]
        if chunk_type != b"MTrk":
            if not chunk_type.isalnum():
                raise MidiParseError(f"malformed chunk id {chunk_type!r}", chunk_start)
            r.take(chunk_len)  # skip alien chunk
            continue
        events.extend(_parse_track(r, chunk_len, track_no))
        track_no += 1

    events.sort(key=lambda e: (e[0], e[1]))
    to_seconds = _tick_to_seconds_map(events, division)
    return _assemble_notes(events, to_seconds, sustain_pedal)


def _assemble_notes(events, to_seconds, sustain_pedal: bool) -> Performance:
    notes: list[NoteEvent] = []
    open_notes: dict[tuple[int, int], list[tuple[float, int]]] = {}
    held: dict[int, list[tuple[int, float, int]]] = {}  # channel -> [(pitch, onset, vel)]
    pedal_down: dict[int, bool] = {}

    def close(pitch: int, velocity: int, onset: float, off: float):
        if off > onset and PITCH_MIN <= pitch <= PITCH_MAX:
            notes.append(NoteEvent(pitch, velocity, onset, off - onset))

    end_time = 0.0
    for tick, _track, kind, payload in events:
        t = to_seconds(tick)
        end_time = max(end_time, t)
        if kind == _NOTE_ON:
            channel, pitch, velocity = payload
            # re-strike of a pedal-held pitch ends the held instance
            for i, (hp, ho, hv) in enumerate(held.get(channel, [])):
                if hp == pitch:
                    close(hp, hv, ho, t)
                    del held[channel][i]
                    break
            open_notes.setdefault((channel, pitch), []).append((t, velocity))
        elif kind == _NOTE_OFF:
            channel, pitch = payload
            stack = open_notes.get((channel, pitch))
            if not stack:
                continue  # stray note-off
            onset, velocity = stack.pop(0)
            if sustain_pedal and pedal_down.get(channel):
                held.setdefault(channel, []).append((pitch, onset, velocity))
            else:
                close(pitch, velocity, onset, t)
        elif kind == _PEDAL and sustain_pedal:
            channel, down = payload
            if not down and pedal_down.get(channel):
                for hp, ho, hv in held.pop(channel, []):
                    close(hp, hv, ho, t)
            pedal_down[channel] = down

    leftovers = sum(len(s) for s in open_notes.values())
    if leftovers:
        warnings.warn(
            f"{leftovers} note-on event(s) without note-off; closed at track end",
            UnclosedNoteWarning,
        )
        for (channel, pitch), stack in open_notes.items():
            for onset, velocity in stack:
                close(pitch, velocity, onset, end_time)
    for channel, entries in held.items():
        for hp, ho, hv in entries:
            close(hp, hv, ho, end_time)

    return Performance.from_notes(notes)


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------

def _vlq_bytes(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def write_midi(performance: Performance, *, tempo_bpm: float = 120.0,
               ticks_per_quarter: int = WRITE_TICKS_PER_QUARTER) -> bytes:
    """Write a Performance as a single-track format 0 SMF.

    Fixed tempo; note times are rounded to the tick grid (~1 ms at the
    defaults), so a parse/write round trip is exact to within one tick.
    Overlapping notes on the same pitch are emitted faithfully but re-pair
    FIFO on parsing; SMF cannot represent that case unambiguously.
    """
    tempo_us = int(round(60e6 / tempo_bpm))
    spt = tempo_us / (ticks_per_quarter * 1e6)  # seconds per tick

    # (tick, off_first_sort_key, pitch, is_on, velocity)
    entries = []
    for n in performance.notes:
        on_tick = int(round(n.onset_s / spt))
        off_tick = max(on_tick + 1, int(round((n.onset_s + n.duration_s) / spt)))
        entries.append((on_tick, 1, n.pitch, True, n.velocity))
        entries.append((off_tick, 0, n.pitch, False, 0))
    entries.sort(key=lambda e: (e[0], e[1], e[2]))

    body = bytearray()
    body += _vlq_bytes(0) + bytes([0xFF, 0x51, 0x03]) + tempo_us.to_bytes(3, "big")
    prev_tick = 0
    for tick, _key, pitch, is_on, velocity in entries:
        body += _vlq_bytes(tick - prev_tick)
        prev_tick = tick
        status = 0x90 if is_on else 0x80
        body += bytes([status, pitch, velocity])
    body += _vlq_bytes(0) + bytes([0xFF, 0x2F, 0x00])

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, ticks_per_quarter)
    track = b"MTrk" + struct.pack(">I", len(body)) + bytes(body)
    return header + track
