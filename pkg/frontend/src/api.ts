/** Typed client for the triage service. Every call carries a request id
 * so overlapping responses can be told apart; the service echoes it. */

import type {
  ApplyResponse,
  EventRecord,
  ExperiencePayload,
  HealthResponse,
  IngestResponse,
  ServiceErrorBody,
  SuggestResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly body: ServiceErrorBody,
  ) {
    super(`${body.error}: ${body.detail}`);
  }

  /** Parser position for inline criteria markers, when the server gave one. */
  get position(): number | undefined {
    return this.body.position;
  }
}

let requestCounter = 0;

export function nextRequestId(): string {
  requestCounter += 1;
  return `con-${Date.now().toString(36)}-${requestCounter}`;
}

export class TriageApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async call<T>(
    path: string,
    payload?: unknown,
    requestId?: string,
  ): Promise<T> {
    const init: RequestInit = {
      method: payload === undefined ? "GET" : "POST",
      headers: {
        "Content-Type": "application/json",
        "X-Request-Id": requestId ?? nextRequestId(),
      },
    };
    if (payload !== undefined) {
      init.body = JSON.stringify(payload);
    }
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    const body = (await resp.json()) as T & ServiceErrorBody;
    if (!resp.ok) {
      throw new ServiceError(resp.status, body);
    }
    return body;
  }

  health(): Promise<HealthResponse> {
    return this.call("/health");
  }

  ingest(events: EventRecord[]): Promise<IngestResponse> {
    return this.call("/events", { events });
  }

  applyFilter(criteria: string, requestId?: string): Promise<ApplyResponse> {
    return this.call("/filters/apply", { criteria }, requestId);
  }

  suggest(k: number, requestId?: string): Promise<SuggestResponse> {
    return this.call(`/suggest?k=${k}`, undefined, requestId);
  }

  recordExperience(payload: ExperiencePayload): Promise<{ id: number }> {
    return this.call("/experiences", payload);
  }
}
