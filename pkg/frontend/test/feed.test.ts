import { describe, expect, it } from "vitest";

import { FeedModel } from "../src/feed.js";
import type { StreamRecord } from "../src/types.js";

function record(seq: number): StreamRecord {
  return { seq, t_ms: seq, kind: "note", payload: {} };
}

describe("FeedModel", () => {
  it("accepts in-order seqs and mirrors stream ordering", () => {
    const feed = new FeedModel();
    for (let s = 0; s < 10; s++) {
      expect(feed.append(record(s)).accepted).toBe(true);
    }
    expect(feed.seqs).toEqual([0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    expect(feed.hasGaps).toBe(false);
  });

  it("refuses duplicates (reconnect overlap)", () => {
    const feed = new FeedModel();
    feed.append(record(0));
    feed.append(record(1));
    const dup = feed.append(record(1));
    expect(dup).toEqual({ accepted: false, reason: "duplicate" });
    expect(feed.seqs).toEqual([0, 1]);
  });

  it("surfaces gaps loudly instead of hiding them", () => {
    const feed = new FeedModel();
    feed.append(record(0));
    const gap = feed.append(record(5));
    expect(gap).toEqual({ accepted: true, reason: "gap" });
    expect(feed.hasGaps).toBe(true);
    expect(feed.gaps).toEqual([{ after: 0, got: 5 }]);
  });

  it("caps the number of retained rows", () => {
    const feed = new FeedModel(50);
    for (let s = 0; s < 200; s++) {
      feed.append(record(s));
    }
    expect(feed.rows).toHaveLength(50);
    expect(feed.seqs[0]).toBe(150);
    expect(feed.lastSeq).toBe(199);
  });
});
