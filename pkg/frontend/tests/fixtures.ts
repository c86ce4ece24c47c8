// Recorded fixtures.
//
// RECORDED_STREAM/RECORDED_BODY: a real /v1/inpaint SSE exchange captured
// from the service running the trained demo checkpoint (seed 0, selection
// [1, 2) s, density 5).  MIDI_FIXTURE_B64/MIDI_FIXTURE_NOTES: a clip written
// and re-parsed by the backend's SMF codec, for cross-implementation checks.

import { Note, Selection } from "../src/types.js";

export const RECORDED_SELECTION: Selection = { start_s: 1.0, end_s: 2.0 };

export const RECORDED_CLIP: Note[] = Array.from({ length: 12 }, (_, i) => ({
  pitch: 60 + (i % 8),
  velocity: 70,
  onset_s: Math.round(i * 0.25 * 1000) / 1000,
  duration_s: 0.2,
}));

export const RECORDED_STREAM =
  'event: note\ndata: {"pitch": 59, "velocity": 112, "onset_s": 1.0, "duration_s": 0.2}\n\n' +
  'event: note\ndata: {"pitch": 70, "velocity": 88, "onset_s": 1.24, "duration_s": 0.2}\n\n' +
  'event: note\ndata: {"pitch": 51, "velocity": 64, "onset_s": 1.48, "duration_s": 0.2}\n\n' +
  'event: note\ndata: {"pitch": 62, "velocity": 104, "onset_s": 1.72, "duration_s": 0.2}\n\n' +
  'event: note\ndata: {"pitch": 65, "velocity": 48, "onset_s": 1.96, "duration_s": 0.2}\n\n' +
  'event: done\ndata: {"notes": [{"pitch": 60, "velocity": 70, "onset_s": 0.0, "duration_s": 0.2}, ' +
  '{"pitch": 61, "velocity": 70, "onset_s": 0.25, "duration_s": 0.2}, ' +
  '{"pitch": 62, "velocity": 70, "onset_s": 0.5, "duration_s": 0.2}, ' +
  '{"pitch": 63, "velocity": 70, "onset_s": 0.75, "duration_s": 0.2}, ' +
  '{"pitch": 59, "velocity": 112, "onset_s": 1.0, "duration_s": 0.2}, ' +
  '{"pitch": 70, "velocity": 88, "onset_s": 1.2, "duration_s": 0.2}, ' +
  '{"pitch": 51, "velocity": 64, "onset_s": 1.4, "duration_s": 0.2}, ' +
  '{"pitch": 62, "velocity": 104, "onset_s": 1.6, "duration_s": 0.2}, ' +
  '{"pitch": 65, "velocity": 48, "onset_s": 1.8, "duration_s": 0.2}, ' +
  '{"pitch": 60, "velocity": 70, "onset_s": 2.0, "duration_s": 0.2}, ' +
  '{"pitch": 61, "velocity": 70, "onset_s": 2.25, "duration_s": 0.2}, ' +
  '{"pitch": 62, "velocity": 70, "onset_s": 2.5, "duration_s": 0.2}, ' +
  '{"pitch": 63, "velocity": 70, "onset_s": 2.75, "duration_s": 0.2}], ' +
  '"generated": [{"pitch": 59, "velocity": 112, "onset_s": 1.0, "duration_s": 0.2}, ' +
  '{"pitch": 70, "velocity": 88, "onset_s": 1.2, "duration_s": 0.2}, ' +
  '{"pitch": 51, "velocity": 64, "onset_s": 1.4, "duration_s": 0.2}, ' +
  '{"pitch": 62, "velocity": 104, "onset_s": 1.6, "duration_s": 0.2}, ' +
  '{"pitch": 65, "velocity": 48, "onset_s": 1.8, "duration_s": 0.2}], ' +
  '"seed": 0, "timing": {"time_to_first_note_s": 0.0068, "phase1_s": 0.0044, ' +
  '"sampling_s": 0.0132, "total_s": 0.0177, "steps": 20}}\n\n';

// clip written by the backend writer; notes as the backend parser reads them
export const MIDI_FIXTURE_B64 =
  "TVRoZAAAAAYAAAABAeBNVHJrAAAApAD/UQMHoSAAkEMdAJBlCogPkCR4AJAsUACQNzlTkBpu" +
  "hR+QNEWKO4A0AFuAQwCBdIAkAHOQSzYAkFE7gQSQHB8AkGQIhAyAGgCKEJA2MgCQSE4sgDcA" +
  "EIAsAA6AZQCEE4BIAIkekEVDgQuQKiU+gBwAhhKAUQAagGQAJoAqAE6QNX6BXoBLAIVJgDYA" +
  "h0CQMgaEH4AyAIZkgEUAi16ANQAA/y8A";

export const MIDI_FIXTURE_NOTES: Note[] = [
  { pitch: 67, velocity: 29, onset_s: 0.0, duration_s: 3.357291667 },
  { pitch: 101, velocity: 10, onset_s: 0.0, duration_s: 5.841666667 },
  { pitch: 36, velocity: 120, onset_s: 1.082291667, duration_s: 2.529166667 },
  { pitch: 44, velocity: 80, onset_s: 1.082291667, duration_s: 4.744791667 },
  { pitch: 55, velocity: 57, onset_s: 1.082291667, duration_s: 4.728125 },
  { pitch: 26, velocity: 110, onset_s: 1.16875, duration_s: 3.245833333 },
  { pitch: 52, velocity: 69, onset_s: 1.867708333, duration_s: 1.394791667 },
  { pitch: 75, velocity: 54, onset_s: 3.73125, duration_s: 5.302083333 },
  { pitch: 81, velocity: 59, onset_s: 3.73125, duration_s: 4.922916667 },
  { pitch: 28, velocity: 31, onset_s: 3.86875, duration_s: 3.966666667 },
  { pitch: 100, velocity: 8, onset_s: 3.86875, duration_s: 4.8125 },
  { pitch: 54, velocity: 50, onset_s: 5.764583333, duration_s: 4.011458333 },
  { pitch: 72, velocity: 78, onset_s: 5.764583333, duration_s: 0.630208333 },
  { pitch: 69, velocity: 67, onset_s: 7.626041667, duration_s: 4.619791667 },
  { pitch: 42, velocity: 37, onset_s: 7.770833333, duration_s: 0.95 },
  { pitch: 53, velocity: 126, onset_s: 8.802083333, duration_s: 5.008333333 },
  { pitch: 50, velocity: 6, onset_s: 10.776041667, duration_s: 0.565625 },
];

export function midiFixtureBytes(): Uint8Array {
  const bin = atob(MIDI_FIXTURE_B64);
  return Uint8Array.from(bin, (ch) => ch.charCodeAt(0));
}
