// Typed client for the engine's HTTP API. Every displayed number comes from
// these payloads verbatim; the dashboard never recomputes HRV or rule
// semantics.

import type {
  ApiErrorBody,
  HrvPoint,
  PersonRecord,
  RulesDocument,
  RunHandle,
  StreamRecord,
  VersionedDocument,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly code: string;
  readonly path?: string;
  readonly status: number;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message);
    this.status = status;
    this.code = body.code;
    this.path = body.path;
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let body: ApiErrorBody;
  try {
    body = (await response.json()) as ApiErrorBody;
  } catch {
    body = { code: "HttpError", message: response.statusText };
  }
  return new ApiError(response.status, body);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  getRules(): Promise<VersionedDocument<RulesDocument>> {
    return this.request("/rules");
  }

  putRules(body: RulesDocument, ifMatchVersion?: number): Promise<{ version: number }> {
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (ifMatchVersion !== undefined) {
      headers["if-match"] = String(ifMatchVersion);
    }
    return this.request("/rules", { method: "PUT", headers, body: JSON.stringify(body) });
  }

  getGallery(): Promise<VersionedDocument<PersonRecord[]>> {
    return this.request("/gallery");
  }

  enroll(name: string, embeddings: number[][]): Promise<{ version: number; record: PersonRecord }> {
    return this.request("/gallery/enroll", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ name, embeddings }),
    });
  }

  deletePerson(personId: string): Promise<{ version: number }> {
    return this.request(`/gallery/${encodeURIComponent(personId)}`, { method: "DELETE" });
  }

  getEvents(params: {
    from?: number;
    to?: number;
    kinds?: string[];
    limit?: number;
    after?: string;
  }): Promise<{ records: StreamRecord[]; next: string | null }> {
    const query = new URLSearchParams();
    if (params.from !== undefined) query.set("from", String(params.from));
    if (params.to !== undefined) query.set("to", String(params.to));
    if (params.kinds?.length) query.set("kinds", params.kinds.join(","));
    if (params.limit !== undefined) query.set("limit", String(params.limit));
    if (params.after !== undefined) query.set("after", params.after);
    const suffix = query.toString() ? `?${query.toString()}` : "";
    return this.request(`/events${suffix}`);
  }

  getHrv(from?: number, to?: number): Promise<{ points: HrvPoint[] }> {
    const query = new URLSearchParams();
    if (from !== undefined) query.set("from", String(from));
    if (to !== undefined) query.set("to", String(to));
    const suffix = query.toString() ? `?${query.toString()}` : "";
    return this.request(`/hrv${suffix}`);
  }

  startRun(traceRef: string, speed = "max", seed = 0): Promise<RunHandle> {
    return this.request("/runs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ trace_ref: traceRef, speed, seed }),
    });
  }

  getRun(runId: string): Promise<RunHandle> {
    return this.request(`/runs/${runId}`);
  }

  cancelRun(runId: string): Promise<RunHandle> {
    return this.request(`/runs/${runId}`, { method: "DELETE" });
  }

  getState(): Promise<{ running: boolean; state: Record<string, unknown> | null }> {
    return this.request("/state");
  }
}
