import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

interface Captured {
  url: string;
  init?: RequestInit;
}

function clientCapturing(status: number, body: unknown): { client: ApiClient; calls: Captured[] } {
  const calls: Captured[] = [];
  const fetchImpl = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  };
  return { client: new ApiClient("", fetchImpl), calls };
}

describe("ApiClient", () => {
  it("sends If-Match on rules updates", async () => {
    const { client, calls } = clientCapturing(200, { version: 3 });
    const out = await client.putRules({ rules: [] }, 2);
    expect(out.version).toBe(3);
    const headers = calls[0]!.init!.headers as Record<string, string>;
    expect(headers["if-match"]).toBe("2");
    expect(calls[0]!.init!.method).toBe("PUT");
  });

  it("omits If-Match when no version is supplied", async () => {
    const { client, calls } = clientCapturing(200, { version: 1 });
    await client.putRules({ rules: [] });
    const headers = calls[0]!.init!.headers as Record<string, string>;
    expect(headers["if-match"]).toBeUndefined();
  });

  it("raises ApiError with the server's code and path", async () => {
    const { client } = clientCapturing(400, {
      code: "SchemaError",
      message: "lo < hi required",
      path: "$.rules[0].trigger.lo_ms",
    });
    try {
      await client.putRules({ rules: [] }, 1);
      expect.unreachable("should have thrown");
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      const apiErr = err as ApiError;
      expect(apiErr.status).toBe(400);
      expect(apiErr.code).toBe("SchemaError");
      expect(apiErr.path).toBe("$.rules[0].trigger.lo_ms");
    }
  });

  it("builds event query strings", async () => {
    const { client, calls } = clientCapturing(200, { records: [], next: null });
    await client.getEvents({ from: 10, to: 99, kinds: ["snapshot", "action"], limit: 5, after: "7:3" });
    expect(calls[0]!.url).toBe("/events?from=10&to=99&kinds=snapshot%2Caction&limit=5&after=7%3A3");
  });

  it("posts enrollments with name and embeddings", async () => {
    const { client, calls } = clientCapturing(200, { version: 1, record: {} });
    await client.enroll("Alice", [[0.5, 0.5]]);
    expect(calls[0]!.url).toBe("/gallery/enroll");
    expect(JSON.parse(calls[0]!.init!.body as string)).toEqual({
      name: "Alice",
      embeddings: [[0.5, 0.5]],
    });
  });
});
