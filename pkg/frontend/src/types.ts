export interface Note {
  pitch: number;      // MIDI pitch, 21..108
  velocity: number;   // 0..127
  onset_s: number;    // seconds from clip start
  duration_s: number; // seconds, > 0
}

export interface Selection {
  start_s: number;
  end_s: number;
}

export type GenerationStatus = "idle" | "streaming" | "error";

export interface DoneTiming {
  time_to_first_note_s: number | null;
  phase1_s: number;
  sampling_s: number;
  total_s: number;
  steps: number;
}

export interface DonePayload {
  notes: Note[];
  generated: Note[];
  seed: number;
  timing: DoneTiming;
}

export interface HealthPayload {
  status: string;
  model?: string;
  checkpoint_sha256?: string | null;
  config?: Record<string, unknown>;
}

export const PITCH_MIN = 21;
export const PITCH_MAX = 108;

export function sortNotes(notes: Note[]): Note[] {
  return [...notes].sort((a, b) => a.onset_s - b.onset_s || a.pitch - b.pitch);
}

export function notesEqual(a: Note[], b: Note[]): boolean {
  if (a.length !== b.length) return false;
  return a.every((n, i) =>
    n.pitch === b[i].pitch && n.velocity === b[i].velocity &&
    n.onset_s === b[i].onset_s && n.duration_s === b[i].duration_s);
}

export function clipEnd(notes: Note[]): number {
  return notes.reduce((m, n) => Math.max(m, n.onset_s + n.duration_s), 0);
}
