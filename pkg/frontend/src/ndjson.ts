/** Incremental NDJSON parsing for the delta stream. */

export class NdjsonParser {
  private buffer = "";

  /** Feed a chunk; returns every complete JSON line it closed. */
  push(chunk: string): unknown[] {
    this.buffer += chunk;
    const out: unknown[] = [];
    for (;;) {
      const nl = this.buffer.indexOf("\n");
      if (nl < 0) break;
      const line = this.buffer.slice(0, nl).trim();
      this.buffer = this.buffer.slice(nl + 1);
      if (line) out.push(JSON.parse(line));
    }
    return out;
  }

  /** Parse any trailing unterminated line (end of response). */
  flush(): unknown[] {
    const line = this.buffer.trim();
    this.buffer = "";
    return line ? [JSON.parse(line)] : [];
  }
}

export function parseNdjson(text: string): unknown[] {
  const parser = new NdjsonParser();
  return [...parser.push(text), ...parser.flush()];
}

/** Keep-alive frames carry seq: null and no payload. */
export function isHeartbeat(obj: unknown): boolean {
  return typeof obj === "object" && obj !== null && (obj as { seq?: unknown }).seq === null;
}
