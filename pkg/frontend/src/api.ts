// Thin typed client over the service's JSON API. The client never computes
// engine state: every mutation is an event POST and the server's returned
// state is the only truth.

import type {
  ApiErrorBody,
  CrossResponse,
  EventBody,
  ModelsResponse,
  SessionMode,
  SessionState,
} from "./types.js";

export class ApiError extends Error {
  status: number;
  rule?: string;
  reference?: string;

  constructor(status: number, body: ApiErrorBody) {
    super(body.error);
    this.status = status;
    this.rule = body.rule;
    this.reference = body.reference;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await res.json();
    if (!res.ok) {
      throw new ApiError(res.status, payload as ApiErrorBody);
    }
    return payload as T;
  }

  models(): Promise<ModelsResponse> {
    return this.request("GET", "/api/models");
  }

  async createSession(
    mode: SessionMode,
    model?: string,
    seed?: number,
  ): Promise<SessionState> {
    const payload = await this.request<{ session_id: string; state: SessionState }>(
      "POST",
      "/api/sessions",
      { mode, ...(model ? { model } : {}), ...(seed !== undefined ? { seed } : {}) },
    );
    return payload.state;
  }

  async getSession(id: string): Promise<SessionState> {
    const payload = await this.request<{ state: SessionState }>(
      "GET",
      `/api/sessions/${id}`,
    );
    return payload.state;
  }

  async postEvent(id: string, event: EventBody): Promise<SessionState> {
    const payload = await this.request<{ state: SessionState }>(
      "POST",
      `/api/sessions/${id}/events`,
      event,
    );
    return payload.state;
  }

  cross(
    topic: string,
    planTemperature?: number,
    storyTemperature?: number,
    seed?: number,
  ): Promise<CrossResponse> {
    return this.request("POST", "/api/cross", {
      topic,
      ...(planTemperature !== undefined ? { plan_temperature: planTemperature } : {}),
      ...(storyTemperature !== undefined ? { story_temperature: storyTemperature } : {}),
      ...(seed !== undefined ? { seed } : {}),
    });
  }
}
