// Client-side Standard MIDI File import/export.
//
// Import handles format 0/1, tempo maps and running status, pairs note-on/off
// FIFO per pitch, and keeps the 88-key range. Sustain-pedal extension is left
// to the backend (pedal events do not change the note count). Export writes
// format 0 at 480 ticks per quarter, 120 BPM, matching the service's writer.

import { Note, PITCH_MAX, PITCH_MIN, sortNotes } from "./types.js";

export class MidiError extends Error {
  constructor(message: string, public offset: number) {
    super(`${message} (byte offset ${offset})`);
  }
}

const DEFAULT_TEMPO_US = 500_000;
const WRITE_TPQ = 480;

interface RawEvent {
  tick: number;
  track: number;
  kind: "on" | "off" | "tempo";
  pitch: number;
  velocity: number;
  tempoUs: number;
}

class Cursor {
  pos = 0;
  constructor(private data: Uint8Array) {}

  peek(): number | null {
    return this.pos < this.data.length ? this.data[this.pos] : null;
  }

  u8(): number {
    if (this.pos >= this.data.length) throw new MidiError("unexpected end of data", this.pos);
    return this.data[this.pos++];
  }

  u16(): number { return (this.u8() << 8) | this.u8(); }
  u32(): number { return (this.u16() << 16 | this.u16()) >>> 0; }

  bytes(n: number): Uint8Array {
    if (this.pos + n > this.data.length) throw new MidiError(`truncated: wanted ${n} bytes`, this.pos);
    const out = this.data.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  vlq(): number {
    let value = 0;
    for (let i = 0; i < 4; i++) {
      const b = this.u8();
      value = (value << 7) | (b & 0x7f);
      if (!(b & 0x80)) return value;
    }
    throw new MidiError("variable-length quantity exceeds 4 bytes", this.pos);
  }
}

function parseTrack(c: Cursor, length: number, track: number): RawEvent[] {
  const end = c.pos + length;
  const events: RawEvent[] = [];
  let tick = 0;
  let status: number | null = null;
  while (c.pos < end) {
    tick += c.vlq();
    const lead = c.peek();
    if (lead === null) throw new MidiError("track ran past end of data", c.pos);
    if (lead >= 0x80) status = c.u8();
    else if (status === null) throw new MidiError(`data byte 0x${lead.toString(16)} with no running status`, c.pos);

    if (status === 0xff) {
      const metaType = c.u8();
      const metaLen = c.vlq();
      const payload = c.bytes(metaLen);
      status = null;
      if (metaType === 0x51) {
        if (metaLen !== 3) throw new MidiError("tempo meta event must carry 3 bytes", c.pos);
        events.push({ tick, track, kind: "tempo", pitch: 0, velocity: 0,
                      tempoUs: (payload[0] << 16) | (payload[1] << 8) | payload[2] });
      } else if (metaType === 0x2f) {
        break;
      }
    } else if (status === 0xf0 || status === 0xf7) {
      c.bytes(c.vlq());
      status = null;
    } else if (status >= 0xf0) {
      throw new MidiError(`unsupported system message 0x${status.toString(16)}`, c.pos);
    } else {
      const kind = status & 0xf0;
      const d1 = c.u8();
      const d2 = kind === 0xc0 || kind === 0xd0 ? 0 : c.u8();
      if (kind === 0x90 && d2 > 0) {
        events.push({ tick, track, kind: "on", pitch: d1, velocity: d2, tempoUs: 0 });
      } else if (kind === 0x80 || (kind === 0x90 && d2 === 0)) {
        events.push({ tick, track, kind: "off", pitch: d1, velocity: 0, tempoUs: 0 });
      }
    }
  }
  if (c.pos > end) throw new MidiError("track events ran past declared chunk length", c.pos);
  c.pos = end;
  return events;
}

export function parseMidi(data: Uint8Array): Note[] {
  const c = new Cursor(data);
  const magic = c.bytes(4);
  if (String.fromCharCode(...magic) !== "MThd") throw new MidiError("missing MThd header", 0);
  const headerLen = c.u32();
  if (headerLen < 6) throw new MidiError(`MThd length ${headerLen} < 6`, 4);
  const fmt = c.u16();
  const ntrks = c.u16();
  const division = c.u16();
  c.bytes(headerLen - 6);
  if (fmt !== 0 && fmt !== 1) throw new MidiError(`unsupported SMF format ${fmt}`, 8);
  if (division & 0x8000) throw new MidiError("SMPTE division not supported in the client", 12);
  const tpq = division & 0x7fff;
  if (tpq === 0) throw new MidiError("zero ticks-per-quarter division", 12);

  const events: RawEvent[] = [];
  let track = 0;
  while (track < ntrks && c.pos < data.length) {
    const chunkStart = c.pos;
    const chunkType = String.fromCharCode(...c.bytes(4));
    const chunkLen = c.u32();
    if (chunkType !== "MTrk") {
      if (!/^[A-Za-z0-9]{4}$/.test(chunkType)) throw new MidiError(`malformed chunk id ${chunkType}`, chunkStart);
      c.bytes(chunkLen);
      continue;
    }
    events.push(...parseTrack(c, chunkLen, track));
    track += 1;
  }
  events.sort((a, b) => a.tick - b.tick || a.track - b.track);

  // tempo map: cumulative seconds at each change
  const anchors: { tick: number; sec: number; us: number }[] = [{ tick: 0, sec: 0, us: DEFAULT_TEMPO_US }];
  for (const e of events) {
    if (e.kind === "tempo") {
      const prev = anchors[anchors.length - 1];
      anchors.push({ tick: e.tick, sec: prev.sec + (e.tick - prev.tick) * prev.us / (tpq * 1e6), us: e.tempoUs });
    }
  }
  const toSeconds = (tick: number): number => {
    let a = anchors[0];
    for (const anchor of anchors) { if (anchor.tick <= tick) a = anchor; else break; }
    return a.sec + (tick - a.tick) * a.us / (tpq * 1e6);
  };

  const open = new Map<number, { onset: number; velocity: number }[]>();
  const notes: Note[] = [];
  let endTime = 0;
  for (const e of events) {
    const t = toSeconds(e.tick);
    endTime = Math.max(endTime, t);
    if (e.kind === "on") {
      const stack = open.get(e.pitch) ?? [];
      stack.push({ onset: t, velocity: e.velocity });
      open.set(e.pitch, stack);
    } else if (e.kind === "off") {
      const stack = open.get(e.pitch);
      if (!stack || stack.length === 0) continue;
      const { onset, velocity } = stack.shift()!;
      if (t > onset && e.pitch >= PITCH_MIN && e.pitch <= PITCH_MAX) {
        notes.push({ pitch: e.pitch, velocity, onset_s: onset, duration_s: t - onset });
      }
    }
  }
  for (const [pitch, stack] of open) {
    for (const { onset, velocity } of stack) {
      if (endTime > onset && pitch >= PITCH_MIN && pitch <= PITCH_MAX) {
        notes.push({ pitch, velocity, onset_s: onset, duration_s: endTime - onset });
      }
    }
  }
  return sortNotes(notes);
}

function vlqBytes(value: number): number[] {
  const out = [value & 0x7f];
  value >>= 7;
  while (value > 0) {
    out.push((value & 0x7f) | 0x80);
    value >>= 7;
  }
  return out.reverse();
}

export function writeMidi(notes: Note[], tempoBpm = 120): Uint8Array {
  const tempoUs = Math.round(60e6 / tempoBpm);
  const spt = tempoUs / (WRITE_TPQ * 1e6);
  const entries: { tick: number; order: number; pitch: number; on: boolean; velocity: number }[] = [];
  for (const n of notes) {
    const onTick = Math.round(n.onset_s / spt);
    const offTick = Math.max(onTick + 1, Math.round((n.onset_s + n.duration_s) / spt));
    entries.push({ tick: onTick, order: 1, pitch: n.pitch, on: true, velocity: n.velocity });
    entries.push({ tick: offTick, order: 0, pitch: n.pitch, on: false, velocity: 0 });
  }
  entries.sort((a, b) => a.tick - b.tick || a.order - b.order || a.pitch - b.pitch);

  const body: number[] = [0, 0xff, 0x51, 0x03, (tempoUs >> 16) & 0xff, (tempoUs >> 8) & 0xff, tempoUs & 0xff];
  let prev = 0;
  for (const e of entries) {
    body.push(...vlqBytes(e.tick - prev));
    prev = e.tick;
    body.push(e.on ? 0x90 : 0x80, e.pitch, e.velocity);
  }
  body.push(0, 0xff, 0x2f, 0x00);

  const header = [0x4d, 0x54, 0x68, 0x64, 0, 0, 0, 6, 0, 0, 0, 1, (WRITE_TPQ >> 8) & 0xff, WRITE_TPQ & 0xff];
  const trackHeader = [0x4d, 0x54, 0x72, 0x6b,
    (body.length >>> 24) & 0xff, (body.length >>> 16) & 0xff, (body.length >>> 8) & 0xff, body.length & 0xff];
  return new Uint8Array([...header, ...trackHeader, ...body]);
}
