// Wires the store, piano roll, synth, and service client to the page.

import { fetchHealth } from "./api.js";
import { MidiError, parseMidi, writeMidi } from "./midi.js";
import { PianoRoll } from "./pianoRoll.js";
import { ClipStore, DENSITY_DEFAULT, DENSITY_MAX, DENSITY_MIN } from "./store.js";
import { Synth, downloadBlob } from "./synth.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const store = new ClipStore();
const roll = new PianoRoll($("roll") as unknown as HTMLCanvasElement, store);
const synth = new Synth();

const statusEl = $("status");
const healthEl = $("health");
const regenBtn = $<HTMLButtonElement>("regenerate");
const cancelBtn = $<HTMLButtonElement>("cancel");
const undoBtn = $<HTMLButtonElement>("undo");
const playBtn = $<HTMLButtonElement>("play");
const exportBtn = $<HTMLButtonElement>("export");
const densityEl = $<HTMLInputElement>("density");
const densityLabel = $("density-label");
const serviceEl = $<HTMLInputElement>("service-url");
const fileEl = $<HTMLInputElement>("file");

densityEl.min = String(DENSITY_MIN);
densityEl.max = String(DENSITY_MAX);
densityEl.step = "0.5";
densityEl.value = String(DENSITY_DEFAULT);
serviceEl.value = store.serviceUrl;

function refresh(): void {
  const sel = store.selection;
  const selText = sel ? `${sel.start_s.toFixed(2)}s .. ${sel.end_s.toFixed(2)}s` : "none";
  statusEl.textContent =
    `${store.notes.length} notes | selection: ${selText} | ${store.status}` +
    (store.errorDetail ? ` (${store.errorDetail})` : "");
  regenBtn.disabled = store.busy || !sel || sel.end_s <= sel.start_s;
  cancelBtn.disabled = !store.busy;
  undoBtn.disabled = store.busy;
  densityLabel.textContent = `${store.density.toFixed(1)} notes/s`;
}
store.on("change", refresh);
store.on("error", () => refresh());

async function pollHealth(): Promise<void> {
  try {
    const h = await fetchHealth(store.serviceUrl);
    healthEl.textContent = h.status === "ok"
      ? `model ready (${(h.config?.model_dim as number) ?? "?"}d)` : `service: ${h.status}`;
  } catch {
    healthEl.textContent = "service unreachable";
  }
}
setInterval(pollHealth, 5000);
void pollHealth();

serviceEl.addEventListener("change", () => {
  store.serviceUrl = serviceEl.value.replace(/\/$/, "");
  void pollHealth();
});

densityEl.addEventListener("input", () => store.setDensity(Number(densityEl.value)));

fileEl.addEventListener("change", async () => {
  const file = fileEl.files?.[0];
  if (!file) return;
  try {
    const bytes = new Uint8Array(await file.arrayBuffer());
    store.loadNotes(bytes.length ? parseMidi(bytes) : []);
  } catch (err) {
    store.status = "error";
    store.errorDetail = err instanceof MidiError ? err.message : String(err);
    refresh();
  }
});

regenBtn.addEventListener("click", () => void store.regenerate());
cancelBtn.addEventListener("click", () => store.cancel());
undoBtn.addEventListener("click", () => store.undo());

playBtn.addEventListener("click", () => {
  if (synth.playing) {
    synth.stop();
    playBtn.textContent = "Play";
    roll.playheadS = null;
    roll.draw();
    return;
  }
  synth.play(store.notes);
  playBtn.textContent = "Stop";
  const tick = () => {
    const pos = synth.position();
    roll.playheadS = pos;
    roll.draw();
    if (pos === null) {
      playBtn.textContent = "Play";
      return;
    }
    requestAnimationFrame(tick);
  };
  requestAnimationFrame(tick);
});

exportBtn.addEventListener("click", () => {
  downloadBlob(writeMidi(store.notes), "clip.mid");
});

refresh();
roll.draw();
