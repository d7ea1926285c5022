// Resumable NDJSON event stream. Tracks the last delivered seq and, after
// any disconnect, reconnects with since_seq=lastSeq so the server replays
// everything missed: the consumer sees every seq exactly once, in order.

import type { FetchLike } from "./api.js";
import type { StreamRecord } from "./types.js";

export interface NdjsonParseState {
  buffer: string;
}

export function parseNdjsonChunk(
  state: NdjsonParseState,
  chunk: string,
): StreamRecord[] {
  state.buffer += chunk;
  const records: StreamRecord[] = [];
  let newline = state.buffer.indexOf("\n");
  while (newline >= 0) {
    const line = state.buffer.slice(0, newline).trim();
    state.buffer = state.buffer.slice(newline + 1);
    if (line.length > 0) {
      records.push(JSON.parse(line) as StreamRecord);
    }
    newline = state.buffer.indexOf("\n");
  }
  return records;
}

export interface StreamOptions {
  sinceSeq?: number;
  kinds?: string[];
  maxReconnects?: number; // Infinity for production use
  reconnectDelayMs?: number;
  onStatus?: (status: "connected" | "reconnecting" | "stopped") => void;
}

export class ResumableStream {
  lastSeq: number;
  reconnects = 0;
  private stopped = false;

  constructor(
    private readonly baseUrl: string = "",
    private readonly options: StreamOptions = {},
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {
    this.lastSeq = options.sinceSeq ?? -1;
  }

  stop(): void {
    this.stopped = true;
  }

  /** Yields records gaplessly across reconnects until stop() or the
   * reconnect budget runs out. */
  async *follow(): AsyncGenerator<StreamRecord> {
    const maxReconnects = this.options.maxReconnects ?? Number.POSITIVE_INFINITY;
    const delay = this.options.reconnectDelayMs ?? 1000;
    while (!this.stopped) {
      let response: Response;
      try {
        response = await this.fetchImpl(this.streamUrl(), {});
        if (!response.ok || response.body === null) {
          throw new Error(`stream HTTP ${response.status}`);
        }
      } catch (err) {
        if (this.reconnects++ >= maxReconnects) {
          this.options.onStatus?.("stopped");
          return;
        }
        this.options.onStatus?.("reconnecting");
        await sleep(delay);
        continue;
      }
      this.options.onStatus?.("connected");
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      const state: NdjsonParseState = { buffer: "" };
      try {
        while (!this.stopped) {
          const { done, value } = await reader.read();
          if (done) {
            break;
          }
          for (const record of parseNdjsonChunk(state, decoder.decode(value, { stream: true }))) {
            if (record.seq <= this.lastSeq) {
              continue; // replayed duplicate after a resume
            }
            this.lastSeq = record.seq;
            yield record;
          }
        }
      } catch {
        // fall through to reconnect
      } finally {
        try {
          await reader.cancel();
        } catch {
          // already closed
        }
      }
      if (this.stopped) {
        break;
      }
      if (this.reconnects++ >= maxReconnects) {
        break;
      }
      this.options.onStatus?.("reconnecting");
      await sleep(delay);
    }
    this.options.onStatus?.("stopped");
  }

  private streamUrl(): string {
    const query = new URLSearchParams({ since_seq: String(this.lastSeq) });
    if (this.options.kinds?.length) {
      query.set("kinds", this.options.kinds.join(","));
    }
    return `${this.baseUrl}/stream?${query.toString()}`;
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
