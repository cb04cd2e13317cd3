/**
 * Typed client for the A/B evaluation service.
 *
 * The fetch implementation is injected so tests can stand in a mocked
 * service and record every payload that crosses the wire.
 */

export interface SessionInfo {
  session_id: string;
  n_items: number;
}

export interface NextItem {
  item_id: string;
  prompt: string;
  left: string;
  right: string;
  dimensions: string[];
  answered: number;
  total: number;
}

export interface ChoiceAck {
  ok: boolean;
  answered: number;
  total: number;
}

export type Choice = "left" | "right";
export type Ratings = Record<string, number>;

/** Thrown for HTTP-level rejections; status 0 means the network failed. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }

  get isNetworkFailure(): boolean {
    return this.status === 0;
  }
}

export type FetchLike = (
  input: string,
  init?: {
    method?: string;
    headers?: Record<string, string>;
    body?: string;
  },
) => Promise<{ status: number; text(): Promise<string> }>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<{ status: number; body: string }> {
    let response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers: body === undefined ? {} : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    const text = await response.text();
    return { status: response.status, body: text };
  }

  async createSession(evaluator: string): Promise<SessionInfo> {
    const res = await this.request("POST", "/sessions", {
      evaluator,
      item_set_id: "default",
    });
    if (res.status !== 200) {
      throw new ApiError(res.status, `session create failed (${res.status})`);
    }
    return JSON.parse(res.body) as SessionInfo;
  }

  /** Returns the next unanswered item, or null when the session is done. */
  async nextItem(sessionId: string): Promise<NextItem | null> {
    const res = await this.request("GET", `/sessions/${sessionId}/next`);
    if (res.status === 204) return null;
    if (res.status !== 200) {
      throw new ApiError(res.status, `next item failed (${res.status})`);
    }
    return JSON.parse(res.body) as NextItem;
  }

  async submitChoice(
    sessionId: string,
    itemId: string,
    choice: Choice,
    ratings?: Ratings,
  ): Promise<ChoiceAck> {
    const res = await this.request(
      "POST",
      `/sessions/${sessionId}/items/${itemId}/choice`,
      ratings ? { choice, ratings } : { choice },
    );
    if (res.status !== 200) {
      throw new ApiError(res.status, `choice rejected (${res.status})`);
    }
    return JSON.parse(res.body) as ChoiceAck;
  }
}
