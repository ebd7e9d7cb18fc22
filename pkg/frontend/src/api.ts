import type {
  ExpandRequest,
  SessionJson,
  SessionNodeJson,
  TopicsResponse,
} from "./types.js";

/** Everything the app needs from the server; tests swap in a recording. */
export interface Transport {
  topics(prompt: string): Promise<TopicsResponse>;
  createSession(prompt: string): Promise<SessionJson>;
  expand(
    sessionId: string,
    nodeId: string,
    req: ExpandRequest,
  ): Promise<SessionNodeJson>;
  getSession(sessionId: string): Promise<SessionJson>;
}

export class HttpError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public details: Record<string, unknown> = {},
  ) {
    super(message);
  }
}

async function postJson<T>(url: string, body: unknown): Promise<T> {
  const res = await fetch(url, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  const payload = await res.json();
  if (!res.ok) {
    throw new HttpError(res.status, payload.code ?? "error",
      payload.message ?? res.statusText, payload.details ?? {});
  }
  return payload as T;
}

export class HttpTransport implements Transport {
  constructor(private base: string = "") {}

  topics(prompt: string): Promise<TopicsResponse> {
    return postJson(`${this.base}/v1/topics`, { prompt });
  }

  createSession(prompt: string): Promise<SessionJson> {
    return postJson(`${this.base}/v1/sessions`, { prompt });
  }

  expand(
    sessionId: string,
    nodeId: string,
    req: ExpandRequest,
  ): Promise<SessionNodeJson> {
    return postJson(
      `${this.base}/v1/sessions/${sessionId}/nodes/${nodeId}/expand`,
      req,
    );
  }

  async getSession(sessionId: string): Promise<SessionJson> {
    const res = await fetch(`${this.base}/v1/sessions/${sessionId}`);
    const payload = await res.json();
    if (!res.ok) {
      throw new HttpError(res.status, payload.code ?? "error",
        payload.message ?? res.statusText, payload.details ?? {});
    }
    return payload as SessionJson;
  }
}
