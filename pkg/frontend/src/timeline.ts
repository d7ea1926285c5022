// HRV timeline model. Points and markers are stored exactly as the API
// returned them; the model only sorts, bins for layout, and derives the
// shaded non-ideal regions from the active rule range.

import type { HrvPoint, StreamRecord } from "./types.js";

export interface Marker {
  t_ms: number;
  seq: number;
  kind: string; // transition | snapshot | action
  label: string;
}

export interface ShadedRegion {
  from_ms: number;
  to_ms: number;
}

const MARKER_KINDS = new Set(["transition", "snapshot", "action"]);

export class TimelineModel {
  points: HrvPoint[] = [];
  markers: Marker[] = [];
  hrvRange: [number, number] = [20, 100];

  setPoints(points: HrvPoint[]): void {
    // verbatim payload values, ordered by time then seq
    this.points = [...points].sort((a, b) => a.t_ms - b.t_ms || a.seq - b.seq);
  }

  setMarkers(records: StreamRecord[]): void {
    this.markers = records
      .filter((r) => MARKER_KINDS.has(r.kind))
      .map((r) => ({
        t_ms: r.t_ms,
        seq: r.seq,
        kind: r.kind,
        label: markerLabel(r),
      }))
      .sort((a, b) => a.t_ms - b.t_ms || a.seq - b.seq);
  }

  setRange(lo: number, hi: number): void {
    this.hrvRange = [lo, hi];
  }

  pointAt(index: number): HrvPoint | undefined {
    return this.points[index];
  }

  /** Hover payload: the exact API values for the point nearest to t. */
  hover(t_ms: number): HrvPoint | undefined {
    if (this.points.length === 0) {
      return undefined;
    }
    let best = this.points[0]!;
    for (const p of this.points) {
      if (Math.abs(p.t_ms - t_ms) < Math.abs(best.t_ms - t_ms)) {
        best = p;
      }
    }
    return best;
  }

  /** Contiguous spans of points whose RMSSD lies outside the active range. */
  shadedRegions(): ShadedRegion[] {
    const [lo, hi] = this.hrvRange;
    const regions: ShadedRegion[] = [];
    let open: ShadedRegion | null = null;
    for (const p of this.points) {
      const value = p.rmssd_ms;
      const nonIdeal = value !== null && (value < lo || value > hi);
      if (nonIdeal) {
        if (open === null) {
          open = { from_ms: p.t_ms, to_ms: p.t_ms };
        } else {
          open.to_ms = p.t_ms;
        }
      } else if (open !== null) {
        regions.push(open);
        open = null;
      }
    }
    if (open !== null) {
      regions.push(open);
    }
    return regions;
  }

  get isEmpty(): boolean {
    return this.points.length === 0;
  }
}

function markerLabel(record: StreamRecord): string {
  const payload = record.payload as Record<string, unknown>;
  if (record.kind === "transition") {
    return `${payload["kind"]}: ${payload["from"]} → ${payload["to"]}`;
  }
  if (record.kind === "snapshot") {
    return `snapshot (${payload["cause"]})`;
  }
  if (record.kind === "action") {
    const action = payload["action"] as Record<string, unknown> | undefined;
    return `action: ${action ? action["type"] : "?"}`;
  }
  return record.kind;
}
