/**
 * HTTP client for the kroulette session service.
 *
 * The complete protocol surface is the four routes in {@link ENDPOINTS};
 * this module deliberately exposes no other request helper, so the client
 * can never ask the server for anything beyond the public table state.
 */

export type Phase = "awaiting-action" | "advancing" | "finished";

export interface Word {
  n: number;
  omega_symbol: number;
  v_symbol: number;
}

export interface Resonance {
  mi: number | null;
  threshold: number | null;
  detected: boolean;
}

export interface Bounds {
  control_min: number;
  control_max: number;
}

export interface Snapshot {
  set_index: number;
  phase: Phase;
  words: Word[];
  balance: number;
  resonance: Resonance;
  bounds: Bounds;
  alphabet_size: number;
}

export interface Bet {
  symbol: number;
  stake: number;
}

export interface Action {
  bet?: Bet;
  control?: number[];
}

export interface CreateSessionResponse {
  id: string;
  snapshot: Snapshot;
}

/** Complete list of routes this client may call. */
export const ENDPOINTS = [
  "POST /session",
  "GET /session/{id}/snapshot",
  "POST /session/{id}/action",
  "POST /session/{id}/advance",
] as const;

/** Error reported by the server: HTTP status plus `{code, field?, message}`. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly field: string | null = null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** The request never reached the server (DNS, refused, dropped, aborted). */
export class ConnectionError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConnectionError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class SessionApi {
  private readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    const impl = fetchImpl ?? globalThis.fetch;
    if (!impl) {
      throw new Error("no fetch implementation available");
    }
    this.fetchImpl = impl.bind(globalThis) as FetchLike;
  }

  /** POST /session — start a match; empty config uses the server default. */
  async createSession(config?: Record<string, unknown>): Promise<CreateSessionResponse> {
    return (await this.request("POST", "/session", config ?? {})) as CreateSessionResponse;
  }

  /** GET /session/{id}/snapshot — current public table state. */
  async getSnapshot(id: string): Promise<Snapshot> {
    return (await this.request("GET", `/session/${encodeURIComponent(id)}/snapshot`)) as Snapshot;
  }

  /** POST /session/{id}/action — stage a bet and/or control for the next set. */
  async submitAction(id: string, action: Action): Promise<Snapshot> {
    return (await this.request(
      "POST",
      `/session/${encodeURIComponent(id)}/action`,
      action,
    )) as Snapshot;
  }

  /** POST /session/{id}/advance — play the next set and settle the bet. */
  async advance(id: string): Promise<Snapshot> {
    return (await this.request(
      "POST",
      `/session/${encodeURIComponent(id)}/advance`,
    )) as Snapshot;
  }

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ConnectionError(err instanceof Error ? err.message : String(err));
    }
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const record = (payload ?? {}) as Record<string, unknown>;
      throw new ApiError(
        response.status,
        typeof record.code === "string" ? record.code : "unknown-error",
        typeof record.message === "string" ? record.message : `HTTP ${response.status}`,
        typeof record.field === "string" ? record.field : null,
      );
    }
    return payload;
  }
}
