from __future__ import annotations

import struct

import numpy as np
import pytest

import smf_oracle
from pianofill.midi import (
    MidiParseError,
    NoteEvent,
    Performance,
    UnclosedNoteWarning,
    parse_midi,
    write_midi,
)

from conftest import random_performance


def vlq(v: int) -> bytes:
    out = [v & 0x7F]
    v >>= 7
    while v:
        out.append((v & 0x7F) | 0x80)
        v >>= 7
    return bytes(reversed(out))


def smf(track_bodies: list[bytes], fmt: int = 1, tpq: int = 480) -> bytes:
    """Hand-assemble an SMF from raw track event bytes (EOT appended)."""
    out = b"MThd" + struct.pack(">IHHH", 6, fmt, len(track_bodies), tpq)
    for body in track_bodies:
        body = body + vlq(0) + bytes([0xFF, 0x2F, 0x00])
        out += b"MTrk" + struct.pack(">I", len(body)) + body
    return out


class TestParse:
    def test_single_note_120bpm(self):
        # note-on(60, v=80) at tick 0, note-off after one beat (480 ticks)
        body = vlq(0) + bytes([0x90, 60, 80]) + vlq(480) + bytes([0x80, 60, 0])
        perf = parse_midi(smf([body]))
        assert len(perf) == 1
        n = perf.notes[0]
        assert (n.pitch, n.velocity) == (60, 80)
        assert n.onset_s == pytest.approx(0.0)
        assert n.duration_s == pytest.approx(0.5)

    def test_empty_track(self):
        assert len(parse_midi(smf([b""]))) == 0

    def test_velocity_zero_is_note_off(self):
        body = vlq(0) + bytes([0x90, 60, 80]) + vlq(240) + bytes([0x90, 60, 0])
        perf = parse_midi(smf([body]))
        assert len(perf) == 1
        assert perf.notes[0].duration_s == pytest.approx(0.25)

    def test_running_status(self):
        # second note-on omits the status byte
        body = (vlq(0) + bytes([0x90, 60, 80]) + vlq(0) + bytes([64, 80])
                + vlq(480) + bytes([0x80, 60, 0]) + vlq(0) + bytes([64, 0]))
        perf = parse_midi(smf([body]))
        assert [n.pitch for n in perf.notes] == [60, 64]

    def test_tempo_change_applies(self):
        # 60 BPM from the start: one beat = 1 s
        body = (vlq(0) + bytes([0xFF, 0x51, 0x03]) + (1_000_000).to_bytes(3, "big")
                + vlq(0) + bytes([0x90, 60, 80]) + vlq(480) + bytes([0x80, 60, 0]))
        perf = parse_midi(smf([body]))
        assert perf.notes[0].duration_s == pytest.approx(1.0)

    def test_mid_track_tempo_change(self):
        # 120 BPM for one beat, then 60 BPM for one beat
        body = (vlq(0) + bytes([0x90, 60, 80])
                + vlq(480) + bytes([0xFF, 0x51, 0x03]) + (1_000_000).to_bytes(3, "big")
                + vlq(480) + bytes([0x80, 60, 0]))
        perf = parse_midi(smf([body]))
        assert perf.notes[0].duration_s == pytest.approx(0.5 + 1.0)

    def test_format1_tempo_in_conductor_track(self):
        conductor = vlq(0) + bytes([0xFF, 0x51, 0x03]) + (250_000).to_bytes(3, "big")
        melody = vlq(0) + bytes([0x90, 72, 90]) + vlq(960) + bytes([0x80, 72, 0])
        perf = parse_midi(smf([conductor, melody]))
        assert perf.notes[0].duration_s == pytest.approx(0.5)

    def test_pitch_range_filter(self):
        body = (vlq(0) + bytes([0x90, 10, 80]) + vlq(0) + bytes([0x90, 60, 80])
                + vlq(480) + bytes([0x80, 10, 0]) + vlq(0) + bytes([0x80, 60, 0]))
        perf = parse_midi(smf([body]))
        assert [n.pitch for n in perf.notes] == [60]

    def test_unclosed_note_warns_and_closes_at_track_end(self):
        body = (vlq(0) + bytes([0x90, 60, 80]) + vlq(480) + bytes([0x90, 62, 70])
                + vlq(480) + bytes([0x80, 62, 0]))
        with pytest.warns(UnclosedNoteWarning):
            perf = parse_midi(smf([body]))
        by_pitch = {n.pitch: n for n in perf.notes}
        assert by_pitch[60].duration_s == pytest.approx(1.0)

    def test_sustain_pedal_extends(self):
        body = (vlq(0) + bytes([0xB0, 64, 127])          # pedal down
                + vlq(0) + bytes([0x90, 60, 80])
                + vlq(240) + bytes([0x80, 60, 0])        # key up at 0.25 s
                + vlq(720) + bytes([0xB0, 64, 0]))       # pedal up at 1.0 s
        perf = parse_midi(smf([body]))
        assert perf.notes[0].duration_s == pytest.approx(1.0)
        perf = parse_midi(smf([body]), sustain_pedal=False)
        assert perf.notes[0].duration_s == pytest.approx(0.25)

    def test_pedal_held_note_ends_on_restrike(self):
        body = (vlq(0) + bytes([0xB0, 64, 127])
                + vlq(0) + bytes([0x90, 60, 80])
                + vlq(240) + bytes([0x80, 60, 0])
                + vlq(240) + bytes([0x90, 60, 90])       # restrike at 0.5 s
                + vlq(240) + bytes([0x80, 60, 0])
                + vlq(240) + bytes([0xB0, 64, 0]))       # pedal up at 1.0 s
        perf = parse_midi(smf([body]))
        assert perf.notes[0].duration_s == pytest.approx(0.5)
        assert perf.notes[1].onset_s == pytest.approx(0.5)
        assert perf.notes[1].duration_s == pytest.approx(0.5)

    def test_bad_header_offsets(self):
        with pytest.raises(MidiParseError):
            parse_midi(b"XXXX" + b"\x00" * 20)
        with pytest.raises(MidiParseError):
            parse_midi(b"MThd" + struct.pack(">IHHH", 6, 3, 1, 480))  # format 2
        data = smf([b""])
        with pytest.raises(MidiParseError):
            parse_midi(data[:len(data) - 2])  # truncated track

    def test_smpte_division(self):
        division = ((256 - 25) << 8) | 40  # 25 fps, 40 ticks/frame: 1 tick = 1 ms
        data = b"MThd" + struct.pack(">IHH", 6, 0, 1) + struct.pack(">H", division)
        body = (vlq(0) + bytes([0x90, 60, 80]) + vlq(500) + bytes([0x80, 60, 0])
                + vlq(0) + bytes([0xFF, 0x2F, 0x00]))
        data += b"MTrk" + struct.pack(">I", len(body)) + body
        perf = parse_midi(data)
        assert perf.notes[0].duration_s == pytest.approx(0.5)


class TestWrite:
    def test_empty_performance_is_valid(self):
        data = write_midi(Performance(()))
        assert len(parse_midi(data)) == 0

    def test_chord_shares_one_tick(self):
        perf = Performance.from_notes([
            NoteEvent(60, 80, 1.0, 0.5),
            NoteEvent(64, 81, 1.0, 0.5),
            NoteEvent(67, 82, 1.0, 0.5),
        ])
        _tpq, events = smf_oracle.read_events(write_midi(perf))
        ons = [(t, d1) for t, _tr, st, d1, d2 in events if st & 0xF0 == 0x90 and d2 > 0]
        assert len(ons) == 3
        assert len({t for t, _ in ons}) == 1

    def test_round_trip_within_one_tick(self, rng):
        tick_s = 500000 / (480 * 1e6)
        for _ in range(30):
            perf = random_performance(rng, int(rng.integers(1, 60)))
            back = parse_midi(write_midi(perf))
            assert len(back) == len(perf)
            for a, b in zip(perf.notes, back.notes):
                assert (a.pitch, a.velocity) == (b.pitch, b.velocity)
                assert abs(a.onset_s - b.onset_s) <= tick_s + 1e-9
                assert abs(a.duration_s - b.duration_s) <= tick_s + 1e-9

    def test_matches_independent_reader(self, rng):
        perf = random_performance(rng, 50)
        data = write_midi(perf)
        ours = parse_midi(data).notes
        theirs = smf_oracle.read_notes(data)
        assert len(ours) == len(theirs)
        for a, (pitch, vel, onset, dur) in zip(ours, theirs):
            assert (a.pitch, a.velocity) == (pitch, vel)
            assert a.onset_s == pytest.approx(onset, abs=1e-9)
            assert a.duration_s == pytest.approx(dur, abs=1e-9)

    def test_parser_against_independent_reader_on_handmade_file(self):
        body = (vlq(0) + bytes([0x90, 60, 80]) + vlq(100) + bytes([0x90, 64, 70])
                + vlq(380) + bytes([0x80, 60, 0]) + vlq(240) + bytes([0x80, 64, 0]))
        data = smf([body])
        ours = [(n.pitch, n.velocity, n.onset_s, n.duration_s) for n in parse_midi(data).notes]
        theirs = smf_oracle.read_notes(data)
        assert ours == pytest.approx(theirs)
