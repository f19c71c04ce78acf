/**
 * Thin typed client for the session API.
 *
 * Every method maps to exactly one route. The fetch implementation is
 * injectable so tests can run without a server; the default is the
 * browser's own fetch bound to the global scope.
 */

import type {
  ChatResponse,
  EngagementCurveView,
  ErrorBody,
  EventAccepted,
  PlanView,
  RawEventBody,
  SessionCreated,
  TagName,
  TagResponse,
  UpdatesPage,
} from "./models.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** A non-2xx reply from the API, carrying the server's code verbatim. */
export class ApiRequestError extends Error {
  readonly status: number;
  readonly code: string;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.name = "ApiRequestError";
    this.status = status;
    this.code = code;
  }
}

export interface ApiClientOptions {
  /** Bearer token, sent on every request when set. */
  token?: string;
  /** Override for tests; defaults to the global fetch. */
  fetchImpl?: FetchLike;
}

export class ApiClient {
  private readonly base: string;
  private readonly token: string | undefined;
  private readonly fetchImpl: FetchLike;

  constructor(base: string, options: ApiClientOptions = {}) {
    this.base = base.replace(/\/+$/, "");
    this.token = options.token;
    this.fetchImpl = options.fetchImpl ?? ((url, init) => fetch(url, init));
  }

  async createSession(
    userName: string,
    lessonFixture: string,
  ): Promise<SessionCreated> {
    return this.request("POST", "/sessions", {
      user_name: userName,
      lesson_fixture: lessonFixture,
    });
  }

  async recordEvent(
    sessionId: string,
    body: RawEventBody,
  ): Promise<EventAccepted> {
    return this.request(
      "POST",
      `/sessions/${encodeURIComponent(sessionId)}/events`,
      body,
    );
  }

  async sendTag(
    sessionId: string,
    tag: TagName,
    text?: string,
  ): Promise<TagResponse> {
    const body: Record<string, string> = { tag };
    if (text !== undefined) body.text = text;
    return this.request(
      "POST",
      `/sessions/${encodeURIComponent(sessionId)}/tags`,
      body,
    );
  }

  async sendChat(sessionId: string, text: string): Promise<ChatResponse> {
    return this.request(
      "POST",
      `/sessions/${encodeURIComponent(sessionId)}/chat`,
      { text },
    );
  }

  async fetchPlan(sessionId: string): Promise<PlanView> {
    return this.request(
      "GET",
      `/sessions/${encodeURIComponent(sessionId)}/plan`,
    );
  }

  async fetchUpdates(
    sessionId: string,
    sinceSeq: number,
  ): Promise<UpdatesPage> {
    return this.request(
      "GET",
      `/sessions/${encodeURIComponent(sessionId)}/updates?since_seq=${sinceSeq}`,
    );
  }

  async fetchEngagement(
    sessionId: string,
    binWidthS: number,
  ): Promise<EngagementCurveView> {
    return this.request(
      "GET",
      `/sessions/${encodeURIComponent(sessionId)}/analytics/engagement?bin=${binWidthS}`,
    );
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token !== undefined) {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    let response: Response;
    try {
      response = await this.fetchImpl(this.base + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err);
      throw new ApiRequestError(0, "unreachable", reason);
    }
    if (!response.ok) {
      throw await this.toError(response);
    }
    return (await response.json()) as T;
  }

  private async toError(response: Response): Promise<ApiRequestError> {
    let code = "unknown";
    let message = `request failed with status ${response.status}`;
    try {
      const body = (await response.json()) as ErrorBody;
      if (body && body.error) {
        code = body.error.code;
        message = body.error.message;
      }
    } catch {
      // Non-JSON error body; keep the status-derived message.
    }
    return new ApiRequestError(response.status, code, message);
  }
}
