// Typed client for the inpainting service: /v1/health and /v1/inpaint (SSE).

import { parseSseStream } from "./sse.js";
import { DonePayload, HealthPayload, Note, Selection } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(`service error ${status}: ${message}`);
  }
}

export interface InpaintBody {
  notes: Note[];
  selection: Selection;
  density?: number;
  note_count?: number;
  mode?: string;
  top_p?: number;
  seed?: number;
  fit?: string;
}

export type InpaintEvent =
  | { kind: "note"; note: Note }
  | { kind: "done"; done: DonePayload }
  | { kind: "error"; detail: string };

export async function fetchHealth(baseUrl: string,
                                  fetchImpl: FetchLike = fetch): Promise<HealthPayload> {
  const resp = await fetchImpl(`${baseUrl}/v1/health`);
  const body = (await resp.json()) as HealthPayload;
  if (!resp.ok && resp.status !== 503) throw new ApiError(resp.status, JSON.stringify(body));
  return body;
}

export async function* inpaintStream(
  baseUrl: string,
  body: InpaintBody,
  fetchImpl: FetchLike = fetch,
  signal?: AbortSignal,
): AsyncGenerator<InpaintEvent> {
  const resp = await fetchImpl(`${baseUrl}/v1/inpaint`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
    signal,
  });
  if (!resp.ok) throw new ApiError(resp.status, await resp.text());
  if (!resp.body) throw new ApiError(0, "response has no body stream");
  for await (const event of parseSseStream(resp.body)) {
    if (event.event === "note") yield { kind: "note", note: JSON.parse(event.data) as Note };
    else if (event.event === "done") yield { kind: "done", done: JSON.parse(event.data) as DonePayload };
    else if (event.event === "error") yield { kind: "error", detail: JSON.parse(event.data).detail ?? event.data };
  }
}
