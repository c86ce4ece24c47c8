// Clip state and the regeneration lifecycle, kept free of DOM so the
// invariants are testable headlessly:
//
// - notes outside the selection are never touched by a regeneration,
// - after `done` the clip equals the done payload exactly,
// - cancel mid-stream restores the exact pre-request note list,
// - undo restores the previous note list (single-level minimum).
//
// The request sends the clip with the selection's notes already stripped, so
// a zero-density request (engine no-op) leaves the selection empty rather
// than resurrecting the removed notes.

import { FetchLike, InpaintBody, inpaintStream } from "./api.js";
import { DonePayload, GenerationStatus, Note, Selection, clipEnd, sortNotes } from "./types.js";

export const SELECTION_SNAP_S = 0.01; // 10 ms
export const APPEND_MARGIN_S = 30.0;  // selection may extend past the clip end
export const DENSITY_MIN = 0;
export const DENSITY_MAX = 20;
export const DENSITY_DEFAULT = 5;

export interface StoreEvents {
  change: () => void;
  noteStreamed: (note: Note) => void;
  done: (payload: DonePayload) => void;
  error: (detail: string) => void;
}

const snap = (value: number): number => Math.round(value / SELECTION_SNAP_S) * SELECTION_SNAP_S;

export class ClipStore {
  notes: Note[] = [];
  selection: Selection | null = null;
  density = DENSITY_DEFAULT;
  status: GenerationStatus = "idle";
  errorDetail: string | null = null;
  serviceUrl = "http://127.0.0.1:8321";
  lastDone: DonePayload | null = null;

  private undoStack: Note[][] = [];
  private preRequest: Note[] | null = null;
  private abortController: AbortController | null = null;
  private listeners: { [K in keyof StoreEvents]: Set<StoreEvents[K]> } = {
    change: new Set(), noteStreamed: new Set(), done: new Set(), error: new Set(),
  };

  on<K extends keyof StoreEvents>(name: K, fn: StoreEvents[K]): void {
    (this.listeners[name] as Set<StoreEvents[K]>).add(fn);
  }

  private emit<K extends keyof StoreEvents>(name: K, ...args: Parameters<StoreEvents[K]>): void {
    for (const fn of this.listeners[name]) (fn as (...a: unknown[]) => void)(...args);
  }

  get busy(): boolean {
    return this.status === "streaming";
  }

  loadNotes(notes: Note[]): void {
    this.pushUndo();
    this.notes = sortNotes(notes);
    this.selection = null;
    this.status = "idle";
    this.errorDetail = null;
    this.emit("change");
  }

  setSelection(start_s: number, end_s: number): void {
    const limit = clipEnd(this.notes) + APPEND_MARGIN_S;
    let a = Math.min(Math.max(snap(start_s), 0), limit);
    let b = Math.min(Math.max(snap(end_s), 0), limit);
    if (b < a) [a, b] = [b, a];
    this.selection = { start_s: a, end_s: b };
    this.emit("change");
  }

  clearSelection(): void {
    this.selection = null;
    this.emit("change");
  }

  setDensity(value: number): void {
    this.density = Math.min(Math.max(value, DENSITY_MIN), DENSITY_MAX);
    this.emit("change");
  }

  pushUndo(): void {
    this.undoStack.push([...this.notes]);
    if (this.undoStack.length > 32) this.undoStack.shift();
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev || this.busy) return false;
    this.notes = prev;
    this.emit("change");
    return true;
  }

  cancel(): void {
    this.abortController?.abort();
  }

  insideSelection(note: Note): boolean {
    const sel = this.selection;
    return sel !== null && note.onset_s >= sel.start_s && note.onset_s < sel.end_s;
  }

  async regenerate(fetchImpl: FetchLike = fetch, seed?: number): Promise<DonePayload | null> {
    if (this.busy || !this.selection) return null;
    const selection = { ...this.selection };
    this.pushUndo();
    this.preRequest = [...this.notes];
    this.status = "streaming";
    this.errorDetail = null;
    // clear the selection's contents; streamed notes repopulate it live
    const outside = this.notes.filter(
      (n) => n.onset_s < selection.start_s || n.onset_s >= selection.end_s);
    this.notes = outside;
    this.emit("change");

    const body: InpaintBody = {
      notes: outside,
      selection,
      density: this.density,
      mode: "contiguous",
      fit: "rescale",
      ...(seed !== undefined ? { seed } : {}),
    };
    this.abortController = new AbortController();
    try {
      for await (const event of inpaintStream(this.serviceUrl, body, fetchImpl,
                                              this.abortController.signal)) {
        if (event.kind === "note") {
          this.notes = sortNotes([...this.notes, event.note]);
          this.emit("noteStreamed", event.note);
          this.emit("change");
        } else if (event.kind === "done") {
          this.notes = sortNotes(event.done.notes);
          this.lastDone = event.done;
          this.status = "idle";
          this.emit("done", event.done);
          this.emit("change");
          return event.done;
        } else {
          throw new Error(event.detail);
        }
      }
      throw new Error("stream ended without a done event");
    } catch (err) {
      // cancel or failure: the clip reverts to its pre-request state
      this.notes = this.preRequest ?? this.notes;
      const aborted = this.abortController?.signal.aborted ?? false;
      this.status = aborted ? "idle" : "error";
      this.errorDetail = aborted ? null : String(err);
      if (!aborted) this.emit("error", this.errorDetail!);
      this.emit("change");
      return null;
    } finally {
      this.abortController = null;
      this.preRequest = null;
    }
  }
}
