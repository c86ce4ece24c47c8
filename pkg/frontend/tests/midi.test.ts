import { describe, expect, it } from "vitest";

import { MidiError, parseMidi, writeMidi } from "../src/midi.js";
import { Note } from "../src/types.js";
import { MIDI_FIXTURE_NOTES, midiFixtureBytes } from "./fixtures.js";

const TICK_S = 500_000 / (480 * 1e6);

describe("parseMidi", () => {
  it("matches the backend parser on a backend-written file", () => {
    const notes = parseMidi(midiFixtureBytes());
    expect(notes.length).toBe(MIDI_FIXTURE_NOTES.length);
    notes.forEach((n, i) => {
      expect(n.pitch).toBe(MIDI_FIXTURE_NOTES[i].pitch);
      expect(n.velocity).toBe(MIDI_FIXTURE_NOTES[i].velocity);
      expect(n.onset_s).toBeCloseTo(MIDI_FIXTURE_NOTES[i].onset_s, 6);
      expect(n.duration_s).toBeCloseTo(MIDI_FIXTURE_NOTES[i].duration_s, 6);
    });
  });

  it("rejects malformed headers with a byte offset", () => {
    expect(() => parseMidi(new TextEncoder().encode("not a midi file")))
      .toThrow(MidiError);
    expect(() => parseMidi(midiFixtureBytes().subarray(0, 30))).toThrow(MidiError);
  });

  it("returns no notes for an empty track", () => {
    const empty = writeMidi([]);
    expect(parseMidi(empty)).toEqual([]);
  });
});

describe("writeMidi", () => {
  const clip: Note[] = [
    { pitch: 60, velocity: 80, onset_s: 0, duration_s: 0.5 },
    { pitch: 64, velocity: 90, onset_s: 0.5, duration_s: 0.25 },
    { pitch: 67, velocity: 70, onset_s: 0.5, duration_s: 1.0 },
  ];

  it("round-trips within one tick", () => {
    const back = parseMidi(writeMidi(clip));
    expect(back.length).toBe(clip.length);
    back.forEach((n, i) => {
      expect(n.pitch).toBe(clip[i].pitch);
      expect(n.velocity).toBe(clip[i].velocity);
      expect(Math.abs(n.onset_s - clip[i].onset_s)).toBeLessThanOrEqual(TICK_S + 1e-9);
      expect(Math.abs(n.duration_s - clip[i].duration_s)).toBeLessThanOrEqual(TICK_S + 1e-9);
    });
  });

  it("export then re-import is stable (second pass identical)", () => {
    const once = parseMidi(writeMidi(clip));
    const twice = parseMidi(writeMidi(once));
    expect(twice).toEqual(once);
  });
});
