import type { Snapshot, Word } from "../src/api";

export function makeWord(n: number, omega: number, v = 0): Word {
  return { n, omega_symbol: omega, v_symbol: v };
}

export function makeSnapshot(partial: Partial<Snapshot> = {}): Snapshot {
  return {
    set_index: partial.words?.length ?? 0,
    phase: "awaiting-action",
    words: [],
    balance: 0.0,
    resonance: { mi: null, threshold: null, detected: false },
    bounds: { control_min: -1.0, control_max: 1.0 },
    alphabet_size: 4,
    ...partial,
  };
}

export interface RecordedCall {
  method: string;
  url: string;
  body: unknown;
}

export interface FakeRoutes {
  create?: (body: unknown) => Promise<[number, unknown]> | [number, unknown];
  snapshot?: () => Promise<[number, unknown]> | [number, unknown];
  action?: (body: unknown) => Promise<[number, unknown]> | [number, unknown];
  advance?: () => Promise<[number, unknown]> | [number, unknown];
}

export interface FakeService {
  fetchImpl: (url: string, init?: RequestInit) => Promise<Response>;
  calls: RecordedCall[];
}

/** In-memory stand-in for the session service, for controller tests. */
export function makeFakeService(routes: FakeRoutes = {}): FakeService {
  const calls: RecordedCall[] = [];
  const fetchImpl = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(init.body as string) : undefined;
    calls.push({ method, url, body });
    const path = new URL(url, "http://fake").pathname;
    let result: [number, unknown];
    if (method === "POST" && path === "/session") {
      result = await (routes.create?.(body) ?? [
        200,
        { id: "fake-session", snapshot: makeSnapshot() },
      ]);
    } else if (method === "GET" && /^\/session\/[^/]+\/snapshot$/.test(path)) {
      result = await (routes.snapshot?.() ?? [200, makeSnapshot()]);
    } else if (method === "POST" && /^\/session\/[^/]+\/action$/.test(path)) {
      result = await (routes.action?.(body) ?? [200, makeSnapshot()]);
    } else if (method === "POST" && /^\/session\/[^/]+\/advance$/.test(path)) {
      result = await (routes.advance?.() ?? [200, makeSnapshot()]);
    } else {
      result = [404, { code: "unknown-route", message: path }];
    }
    const [status, payload] = result;
    return {
      ok: status >= 200 && status < 300,
      status,
      json: async () => payload,
    } as unknown as Response;
  };
  return { fetchImpl, calls };
}

/** Set an input's value and fire the event the controller listens for. */
export function type(input: HTMLInputElement | HTMLTextAreaElement, value: string): void {
  input.value = value;
  input.dispatchEvent(new Event("input", { bubbles: true }));
}

export function choose(select: HTMLSelectElement, value: string): void {
  select.value = value;
  select.dispatchEvent(new Event("change", { bubbles: true }));
}
