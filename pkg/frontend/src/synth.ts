// WebAudio audition: a plain decaying-sine voice per note, plus a playhead
// clock. Silence for an empty clip falls out naturally.

import { Note, clipEnd } from "./types.js";

export class Synth {
  private ctx: AudioContext | null = null;
  private startedAt: number | null = null;
  private clipLength = 0;
  private scheduled: OscillatorNode[] = [];

  get playing(): boolean {
    return this.startedAt !== null;
  }

  /** Elapsed seconds into the clip, or null when stopped. */
  position(): number | null {
    if (this.ctx === null || this.startedAt === null) return null;
    const t = this.ctx.currentTime - this.startedAt;
    if (t > this.clipLength) {
      this.stop();
      return null;
    }
    return t;
  }

  play(notes: Note[]): void {
    this.stop();
    this.ctx = this.ctx ?? new AudioContext();
    const now = this.ctx.currentTime + 0.05;
    this.startedAt = now;
    this.clipLength = clipEnd(notes);
    for (const n of notes) {
      const osc = this.ctx.createOscillator();
      const gain = this.ctx.createGain();
      osc.frequency.value = 440 * Math.pow(2, (n.pitch - 69) / 12);
      const peak = 0.25 * (n.velocity / 127);
      const t0 = now + n.onset_s;
      const t1 = t0 + n.duration_s;
      gain.gain.setValueAtTime(0, t0);
      gain.gain.linearRampToValueAtTime(peak, t0 + 0.005);
      gain.gain.exponentialRampToValueAtTime(Math.max(peak * 0.1, 1e-4), t1);
      gain.gain.linearRampToValueAtTime(0, t1 + 0.02);
      osc.connect(gain).connect(this.ctx.destination);
      osc.start(t0);
      osc.stop(t1 + 0.05);
      this.scheduled.push(osc);
    }
  }

  stop(): void {
    for (const osc of this.scheduled) {
      try {
        osc.stop();
      } catch {
        // already ended
      }
    }
    this.scheduled = [];
    this.startedAt = null;
  }
}

export function downloadBlob(data: Uint8Array, filename: string): void {
  const blob = new Blob([data.buffer as ArrayBuffer], { type: "audio/midi" });
  const url = URL.createObjectURL(blob);
  const a = document.createElement("a");
  a.href = url;
  a.download = filename;
  a.click();
  URL.revokeObjectURL(url);
}
