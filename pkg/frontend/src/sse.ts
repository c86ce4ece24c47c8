// Minimal server-sent-events parser over a byte stream.
//
// fetch() exposes POST response bodies as a ReadableStream; the native
// EventSource only speaks GET, so we parse the wire format ourselves:
// blank-line-separated blocks of "event:"/"data:" lines, with data lines
// joined by newlines and chunk boundaries falling anywhere.

export interface SseEvent {
  event: string;
  data: string;
}

export function parseSseBlock(block: string): SseEvent {
  let event = "message";
  const data: string[] = [];
  for (const rawLine of block.split("\n")) {
    const line = rawLine.endsWith("\r") ? rawLine.slice(0, -1) : rawLine;
    if (line.startsWith("event:")) event = line.slice(6).trim();
    else if (line.startsWith("data:")) data.push(line.slice(5).trimStart());
  }
  return { event, data: data.join("\n") };
}

export async function* parseSseStream(
  stream: ReadableStream<Uint8Array>,
): AsyncGenerator<SseEvent> {
  const decoder = new TextDecoder();
  const reader = stream.getReader();
  let buffer = "";
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let split: number;
      while ((split = buffer.indexOf("\n\n")) >= 0) {
        const block = buffer.slice(0, split);
        buffer = buffer.slice(split + 2);
        if (block.trim()) yield parseSseBlock(block);
      }
    }
    if (buffer.trim()) yield parseSseBlock(buffer);
  } finally {
    reader.releaseLock();
  }
}

export function streamFromString(text: string, chunkSize = 7): ReadableStream<Uint8Array> {
  // test helper: replay a recorded stream in small chunks
  const bytes = new TextEncoder().encode(text);
  let offset = 0;
  return new ReadableStream({
    pull(controller) {
      if (offset >= bytes.length) {
        controller.close();
        return;
      }
      controller.enqueue(bytes.subarray(offset, offset + chunkSize));
      offset += chunkSize;
    },
  });
}
