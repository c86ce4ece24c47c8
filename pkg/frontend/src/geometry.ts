// Pure coordinate mapping between clip time/pitch and canvas pixels.

import { PITCH_MAX, PITCH_MIN } from "./types.js";

export interface Viewport {
  width: number;
  height: number;
  seconds: number; // visible time span starting at 0
}

export const N_KEYS = PITCH_MAX - PITCH_MIN + 1;

export function xForTime(t: number, vp: Viewport): number {
  return (t / vp.seconds) * vp.width;
}

export function timeForX(x: number, vp: Viewport): number {
  return (x / vp.width) * vp.seconds;
}

export function yForPitch(pitch: number, vp: Viewport): number {
  const row = PITCH_MAX - pitch; // high notes at the top
  return (row / N_KEYS) * vp.height;
}

export function rowHeight(vp: Viewport): number {
  return vp.height / N_KEYS;
}
