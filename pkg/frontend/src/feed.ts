// Live event feed model: rows appear exactly in seq order; duplicates are
// refused and gaps are surfaced rather than papered over.

import type { StreamRecord } from "./types.js";

export interface AppendResult {
  accepted: boolean;
  reason?: "duplicate" | "gap";
}

export class FeedModel {
  rows: StreamRecord[] = [];
  lastSeq = -1;
  gaps: Array<{ after: number; got: number }> = [];

  constructor(private readonly maxRows: number = 500) {}

  append(record: StreamRecord): AppendResult {
    if (record.seq <= this.lastSeq) {
      return { accepted: false, reason: "duplicate" };
    }
    if (this.lastSeq >= 0 && record.seq > this.lastSeq + 1) {
      // the stream contract says this cannot happen; record it loudly
      this.gaps.push({ after: this.lastSeq, got: record.seq });
      this.lastSeq = record.seq;
      this.rows.push(record);
      this.trim();
      return { accepted: true, reason: "gap" };
    }
    this.lastSeq = record.seq;
    this.rows.push(record);
    this.trim();
    return { accepted: true };
  }

  get seqs(): number[] {
    return this.rows.map((r) => r.seq);
  }

  get hasGaps(): boolean {
    return this.gaps.length > 0;
  }

  private trim(): void {
    if (this.rows.length > this.maxRows) {
      this.rows.splice(0, this.rows.length - this.maxRows);
    }
  }
}
