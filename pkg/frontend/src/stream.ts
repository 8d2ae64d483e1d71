/** Long-lived stream subscription with gap recovery.
 *
 * Follows /stream (NDJSON). On disconnect it flips the connection state,
 * re-syncs missed deltas via the catch-up mode, and re-subscribes from
 * the next sequence number, so the fold never sees a gap.
 */
import type { ApiClient, Delta } from "./api.js";
import { isHeartbeat, NdjsonParser } from "./ndjson.js";
import type { Connection } from "./state.js";

export interface StreamCallbacks {
  onDelta: (delta: Delta) => void;
  onConnection?: (state: Connection) => void;
}

export class StreamFollower {
  private stopped = false;
  private nextSeq = 0;

  constructor(
    private readonly client: ApiClient,
    private readonly callbacks: StreamCallbacks,
    private readonly retryDelayMs = 1000,
  ) {}

  stop(): void {
    this.stopped = true;
  }

  private emit(delta: Delta): void {
    if (delta.seq < this.nextSeq) return;
    this.nextSeq = delta.seq + 1;
    this.callbacks.onDelta(delta);
  }

  async run(fromSeq = 0): Promise<void> {
    this.nextSeq = fromSeq;
    while (!this.stopped) {
      try {
        this.callbacks.onConnection?.("connecting");
        const resp = await fetch(this.client.url("/stream", { from_seq: this.nextSeq, follow: true }));
        if (!resp.ok || !resp.body) throw new Error(`stream HTTP ${resp.status}`);
        this.callbacks.onConnection?.("live");
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        const parser = new NdjsonParser();
        for (;;) {
          const { done, value } = await reader.read();
          if (this.stopped) {
            await reader.cancel();
            break;
          }
          const frames = done
            ? parser.flush()
            : parser.push(decoder.decode(value, { stream: true }));
          for (const frame of frames) {
            if (!isHeartbeat(frame)) this.emit(frame as Delta);
          }
          if (done) break;
        }
      } catch {
        /* fall through to recovery */
      }
      if (this.stopped) break;
      this.callbacks.onConnection?.("reconnecting");
      try {
        // recover anything missed while disconnected, then resubscribe
        for (const delta of await this.client.streamCatchUp(this.nextSeq)) {
          this.emit(delta);
        }
      } catch {
        /* server still unreachable; retry after the delay */
      }
      await new Promise((resolve) => setTimeout(resolve, this.retryDelayMs));
    }
    this.callbacks.onConnection?.("closed");
  }
}
