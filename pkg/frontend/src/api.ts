// Thin fetch client. Every path the UI touches is listed in API_PATHS so
// the contract test can compare the set against the served OpenAPI schema.

import type {
  AnnotationBody,
  AnnotationEcho,
  ConversationDetail,
  IterationsState,
  PromoteResponse,
  QueueResponse,
  SeedsetResponse,
  StartIterationResponse,
} from "./types";

export const API_PATHS = {
  healthz: "/api/healthz",
  iterations: "/api/iterations",
  queue: "/api/iterations/{k}/queue",
  conversation: "/api/conversations/{conversation_id}",
  annotation: "/api/conversations/{conversation_id}/annotation",
  promote: "/api/iterations/promote",
  seedset: "/api/seedset",
  stats: "/api/stats",
} as const;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly reason: string,
  ) {
    super(`${status}: ${reason}`);
    this.name = "ApiError";
  }
}

function fill(template: string, params: Record<string, string | number>): string {
  return template.replace(/\{(\w+)\}/g, (_whole, name: string) =>
    encodeURIComponent(String(params[name])),
  );
}

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly token: string | null = null,
  ) {}

  private async request<T>(
    method: "GET" | "POST",
    path: string,
    body?: unknown,
    idempotencyKey?: string,
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token) headers["X-Api-Token"] = this.token;
    if (idempotencyKey) headers["Idempotency-Key"] = idempotencyKey;
    const response = await fetch(this.base + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload: unknown = await response.json().catch(() => ({}));
    if (!response.ok) {
      throw new ApiError(response.status, extractReason(payload, response.statusText));
    }
    return payload as T;
  }

  healthz(): Promise<{ status: string }> {
    return this.request("GET", API_PATHS.healthz);
  }

  iterations(): Promise<IterationsState> {
    return this.request("GET", API_PATHS.iterations);
  }

  queue(k: number): Promise<QueueResponse> {
    return this.request("GET", fill(API_PATHS.queue, { k }));
  }

  conversation(id: string): Promise<ConversationDetail> {
    return this.request("GET", fill(API_PATHS.conversation, { conversation_id: id }));
  }

  seedset(): Promise<SeedsetResponse> {
    return this.request("GET", API_PATHS.seedset);
  }

  stats(): Promise<Record<string, unknown>> {
    return this.request("GET", API_PATHS.stats);
  }

  startIteration(batchSize?: number, idempotencyKey?: string): Promise<StartIterationResponse> {
    const body = batchSize === undefined ? {} : { batch_size: batchSize };
    return this.request("POST", API_PATHS.iterations, body, idempotencyKey);
  }

  annotate(id: string, body: AnnotationBody, idempotencyKey?: string): Promise<AnnotationEcho> {
    return this.request(
      "POST",
      fill(API_PATHS.annotation, { conversation_id: id }),
      body,
      idempotencyKey,
    );
  }

  promote(idempotencyKey?: string): Promise<PromoteResponse> {
    return this.request("POST", API_PATHS.promote, undefined, idempotencyKey);
  }
}

function extractReason(payload: unknown, fallback: string): string {
  if (payload && typeof payload === "object") {
    const record = payload as Record<string, unknown>;
    if (typeof record.reason === "string") return record.reason;
    if (typeof record.detail === "string") return record.detail;
    if (record.detail !== undefined) return JSON.stringify(record.detail);
  }
  return fallback;
}
