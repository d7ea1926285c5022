// Wire types mirroring the engine's event log and configuration documents.

export interface StreamRecord {
  seq: number;
  t_ms: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface HrvPoint {
  t_ms: number;
  seq: number;
  rmssd_ms: number | null;
  sdnn_ms: number | null;
  mean_hr_bpm: number | null;
}

export interface VersionedDocument<T> {
  version: number;
  body: T;
}

export interface RuleAction {
  type: string;
  [key: string]: unknown;
}

export interface RuleEntry {
  id: string;
  enabled?: boolean;
  trigger: { type: string; [key: string]: unknown };
  conditions?: { type: string; [key: string]: unknown }[];
  actions: RuleAction[];
  cooldown_ms?: number;
}

export interface RulesDocument {
  schema_version?: number;
  hrv_range?: [number, number];
  rules?: RuleEntry[];
  [key: string]: unknown;
}

export interface PersonRecord {
  person_id: string;
  name: string;
  centroids: number[][];
  enrolled_at_ms: number;
}

export interface RunHandle {
  run_id: string;
  trace_ref: string;
  rules_version: number;
  speed: string;
  seed: number;
  status: "running" | "done" | "failed" | "cancelled";
  error: string | null;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  path?: string;
}
