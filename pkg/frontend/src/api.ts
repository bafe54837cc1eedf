/** Thin client over the documented HTTP API.
 *
 * POST /ask is the only mutating call the UI ever makes; traces and schema
 * are read-only views. The fetch implementation is injectable so tests run
 * against fully mocked responses.
 */

import type { ApiError, AskResponse, TraceRecord } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface AskRequest {
  question: string;
  patient_scope?: string;
  profile?: string;
}

export type TraceResult =
  | { kind: "loaded"; trace: TraceRecord }
  | { kind: "expired" };

function extractDetail(body: unknown): { message: string; traceId?: string } {
  if (body && typeof body === "object" && "detail" in body) {
    const detail = (body as { detail: unknown }).detail;
    if (typeof detail === "string") return { message: detail };
    if (detail && typeof detail === "object") {
      const d = detail as { error?: string; trace_id?: string };
      return { message: d.error ?? JSON.stringify(detail), traceId: d.trace_id ?? undefined };
    }
  }
  return { message: "request failed" };
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async ask(request: AskRequest): Promise<AskResponse> {
    const response = await this.fetchImpl(`${this.baseUrl}/ask`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
    });
    if (!response.ok) {
      const detail = extractDetail(await response.json().catch(() => null));
      const error: ApiError = { status: response.status, message: detail.message, traceId: detail.traceId };
      throw Object.assign(new Error(detail.message), { apiError: error });
    }
    return (await response.json()) as AskResponse;
  }

  /** 404 means the trace is gone (e.g. service restarted), not a failure. */
  async trace(traceId: string): Promise<TraceResult> {
    const response = await this.fetchImpl(`${this.baseUrl}/trace/${encodeURIComponent(traceId)}`);
    if (response.status === 404) return { kind: "expired" };
    if (!response.ok) {
      const detail = extractDetail(await response.json().catch(() => null));
      throw Object.assign(new Error(detail.message), {
        apiError: { status: response.status, message: detail.message } satisfies ApiError,
      });
    }
    return { kind: "loaded", trace: (await response.json()) as TraceRecord };
  }
}

export function asApiError(error: unknown): ApiError {
  if (error && typeof error === "object" && "apiError" in error) {
    return (error as { apiError: ApiError }).apiError;
  }
  return { status: 0, message: error instanceof Error ? error.message : String(error) };
}
