import { describe, expect, it } from "vitest";

import { ApiClient, asApiError } from "../src/api.js";
import { fullEvidenceResponse, jsonResponse, simpleTrace } from "./fixtures.js";

function recordingFetch(responder: (url: string, init?: RequestInit) => Response) {
  const calls: { url: string; method: string }[] = [];
  const fetchImpl = async (url: string, init?: RequestInit) => {
    calls.push({ url, method: init?.method ?? "GET" });
    return responder(url, init);
  };
  return { calls, fetchImpl };
}

describe("ApiClient", () => {
  it("ask posts the question to /ask and returns the body", async () => {
    const { calls, fetchImpl } = recordingFetch(() => jsonResponse(fullEvidenceResponse));
    const client = new ApiClient("", fetchImpl);
    const body = await client.ask({ question: "aspirin?", patient_scope: "10001" });
    expect(calls).toEqual([{ url: "/ask", method: "POST" }]);
    expect(body.trace_id).toBe(fullEvidenceResponse.trace_id);
  });

  it("ask raises a typed error carrying status and detail", async () => {
    const { fetchImpl } = recordingFetch(() =>
      jsonResponse({ detail: "unknown patient_scope '99999'" }, 422),
    );
    const client = new ApiClient("", fetchImpl);
    const error = await client.ask({ question: "who?" }).then(
      () => null,
      (e) => asApiError(e),
    );
    expect(error).toEqual({ status: 422, message: "unknown patient_scope '99999'", traceId: undefined });
  });

  it("a 502 detail object yields the partial trace id", async () => {
    const { fetchImpl } = recordingFetch(() =>
      jsonResponse({ detail: { error: "chat backend failed", trace_id: "t000009-partial" } }, 502),
    );
    const client = new ApiClient("", fetchImpl);
    const error = await client.ask({ question: "down?" }).then(
      () => null,
      (e) => asApiError(e),
    );
    expect(error?.status).toBe(502);
    expect(error?.traceId).toBe("t000009-partial");
  });

  it("trace 404 is the expired result, not an exception", async () => {
    const { fetchImpl } = recordingFetch(() => jsonResponse({ detail: "unknown trace" }, 404));
    const client = new ApiClient("", fetchImpl);
    expect(await client.trace("gone")).toEqual({ kind: "expired" });
  });

  it("trace success returns the record under its id", async () => {
    const { calls, fetchImpl } = recordingFetch(() => jsonResponse(simpleTrace));
    const client = new ApiClient("http://svc", fetchImpl);
    const result = await client.trace("t000001-x");
    expect(calls[0]).toEqual({ url: "http://svc/trace/t000001-x", method: "GET" });
    expect(result).toEqual({ kind: "loaded", trace: simpleTrace });
  });
});
