// Canvas piano roll: velocity-shaded notes, drag selection, playhead.

import { rowHeight, timeForX, Viewport, xForTime, yForPitch } from "./geometry.js";
import { ClipStore } from "./store.js";
import { clipEnd } from "./types.js";

const CONTEXT_COLOR = (v: number) => `rgba(70, 130, 220, ${0.35 + 0.65 * (v / 127)})`;
const FRESH_COLOR = (v: number) => `rgba(240, 150, 40, ${0.35 + 0.65 * (v / 127)})`;
const SELECTION_FILL = "rgba(120, 200, 120, 0.18)";
const SELECTION_EDGE = "rgba(120, 200, 120, 0.9)";

export class PianoRoll {
  private dragAnchor: number | null = null;
  private freshOnsets = new Set<number>();
  playheadS: number | null = null;

  constructor(private canvas: HTMLCanvasElement, private store: ClipStore) {
    canvas.addEventListener("mousedown", (e) => this.onDown(e));
    canvas.addEventListener("mousemove", (e) => this.onMove(e));
    window.addEventListener("mouseup", () => (this.dragAnchor = null));
    store.on("change", () => this.draw());
    store.on("noteStreamed", (n) => this.freshOnsets.add(n.onset_s));
    store.on("done", () => this.freshOnsets.clear());
  }

  private viewport(): Viewport {
    const seconds = Math.max(clipEnd(this.store.notes),
                             this.store.selection?.end_s ?? 0, 8) + 1;
    return { width: this.canvas.width, height: this.canvas.height, seconds };
  }

  private eventTime(e: MouseEvent): number {
    const rect = this.canvas.getBoundingClientRect();
    const x = ((e.clientX - rect.left) / rect.width) * this.canvas.width;
    return timeForX(x, this.viewport());
  }

  private onDown(e: MouseEvent): void {
    if (this.store.busy) return;
    this.dragAnchor = this.eventTime(e);
    this.store.setSelection(this.dragAnchor, this.dragAnchor);
  }

  private onMove(e: MouseEvent): void {
    if (this.dragAnchor === null || this.store.busy) return;
    this.store.setSelection(this.dragAnchor, this.eventTime(e));
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const vp = this.viewport();
    ctx.clearRect(0, 0, vp.width, vp.height);
    ctx.fillStyle = "#14161a";
    ctx.fillRect(0, 0, vp.width, vp.height);

    // octave guides
    ctx.strokeStyle = "rgba(255,255,255,0.07)";
    for (let pitch = 24; pitch <= 108; pitch += 12) {
      const y = yForPitch(pitch, vp);
      ctx.beginPath();
      ctx.moveTo(0, y);
      ctx.lineTo(vp.width, y);
      ctx.stroke();
    }

    const sel = this.store.selection;
    if (sel) {
      const x0 = xForTime(sel.start_s, vp);
      const x1 = xForTime(sel.end_s, vp);
      ctx.fillStyle = SELECTION_FILL;
      ctx.fillRect(x0, 0, Math.max(x1 - x0, 1), vp.height);
      ctx.strokeStyle = SELECTION_EDGE;
      ctx.strokeRect(x0, 0, Math.max(x1 - x0, 1), vp.height);
    }

    const h = Math.max(rowHeight(vp) - 1, 2);
    for (const n of this.store.notes) {
      const fresh = this.freshOnsets.has(n.onset_s);
      ctx.fillStyle = fresh ? FRESH_COLOR(n.velocity) : CONTEXT_COLOR(n.velocity);
      ctx.fillRect(xForTime(n.onset_s, vp), yForPitch(n.pitch, vp),
                   Math.max(xForTime(n.duration_s, vp), 2), h);
    }

    if (this.playheadS !== null) {
      ctx.strokeStyle = "rgba(255, 80, 80, 0.9)";
      const x = xForTime(this.playheadS, vp);
      ctx.beginPath();
      ctx.moveTo(x, 0);
      ctx.lineTo(x, vp.height);
      ctx.stroke();
    }
  }
}
