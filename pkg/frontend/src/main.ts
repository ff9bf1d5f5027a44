/**
 * Table controller: owns the view model, talks to the session service, and
 * keeps the DOM in sync.
 *
 * Concurrency: the game is strictly turn-based, so the controller allows a
 * single active request per table. While one is in flight the model is
 * "busy" and every input is disabled; a new snapshot is polled after each
 * advance rather than pushed.
 */

import { ApiError, ConnectionError, SessionApi } from "./api";
import type { FetchLike, Snapshot } from "./api";
import {
  actionFromPending,
  applySnapshot,
  initialViewModel,
  validatePending,
} from "./state";
import type { ViewModel } from "./state";
import { buildLayout, configureTable, render } from "./render";
import type { Refs } from "./render";

export interface RetryPolicy {
  /** Snapshot fetch attempts before giving up (total, not extra). */
  attempts: number;
  /** First retry delay in ms; doubles on each further attempt. */
  baseMs: number;
}

export interface PlayUiOptions {
  baseUrl: string;
  fetchImpl?: FetchLike;
  /** Number of control sliders the player's seat has. */
  controlDim?: number;
  retry?: RetryPolicy;
}

const DEFAULT_CONTROL_DIM = 2;
const DEFAULT_RETRY: RetryPolicy = { attempts: 5, baseMs: 250 };

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export class PlayUi {
  readonly vm: ViewModel;
  readonly refs: Refs;
  readonly api: SessionApi;
  /** Promise of the most recent button-triggered operation (for automation). */
  lastOperation: Promise<void> = Promise.resolve();

  private readonly retry: RetryPolicy;
  private readonly controlDim: number;

  constructor(root: HTMLElement, options: PlayUiOptions) {
    this.api = new SessionApi(options.baseUrl, options.fetchImpl);
    this.retry = options.retry ?? DEFAULT_RETRY;
    this.controlDim = options.controlDim ?? DEFAULT_CONTROL_DIM;
    this.vm = initialViewModel(this.controlDim);
    this.refs = buildLayout(root);
    this.wire();
    render(this.refs, this.vm);
  }

  /** Start a fresh match and show its table. */
  async newSession(config?: Record<string, unknown>): Promise<void> {
    if (this.vm.status === "busy") {
      return;
    }
    this.begin();
    try {
      const created = await this.api.createSession(config);
      this.vm.sessionId = created.id;
      this.vm.snapshot = null;
      this.vm.balanceHistory = [];
      this.vm.lastDelta = null;
      this.vm.pending.symbol = null;
      this.vm.pending.control = new Array(this.controlDim).fill(0);
      this.resetTiles();
      applySnapshot(this.vm, created.snapshot);
      configureTable(this.refs, created.snapshot, this.vm.pending);
      this.finish();
    } catch (err) {
      this.fail(err);
    }
    render(this.refs, this.vm);
  }

  /** Poll the current snapshot, retrying with backoff on network failure. */
  async sync(): Promise<void> {
    const id = this.vm.sessionId;
    if (id === null || this.vm.status === "busy") {
      return;
    }
    this.begin();
    for (let attempt = 0; attempt < this.retry.attempts; attempt += 1) {
      try {
        const snapshot = await this.api.getSnapshot(id);
        applySnapshot(this.vm, snapshot);
        this.finish();
        render(this.refs, this.vm);
        return;
      } catch (err) {
        if (!(err instanceof ConnectionError)) {
          this.fail(err);
          render(this.refs, this.vm);
          return;
        }
        this.vm.status = "disconnected";
        render(this.refs, this.vm);
        if (attempt + 1 < this.retry.attempts) {
          await sleep(this.retry.baseMs * 2 ** attempt);
        }
      }
    }
    this.vm.banner = "cannot reach the table service";
    render(this.refs, this.vm);
  }

  /**
   * Submit the pending bet/controls, then advance one set. Validation
   * failures stay on the client: nothing is sent until the action passes
   * the same bounds the server enforces.
   */
  async playTurn(): Promise<void> {
    const id = this.vm.sessionId;
    const snapshot = this.vm.snapshot;
    if (id === null || snapshot === null || this.vm.status === "busy") {
      return;
    }
    if (snapshot.phase !== "awaiting-action") {
      return;
    }
    const errors = validatePending(this.vm.pending, snapshot);
    this.vm.fieldErrors = errors;
    if (Object.keys(errors).length > 0) {
      render(this.refs, this.vm);
      return;
    }
    this.begin();
    render(this.refs, this.vm); // inputs go dark before the first request
    try {
      await this.api.submitAction(id, actionFromPending(this.vm.pending));
      const advanced = await this.api.advance(id);
      applySnapshot(this.vm, advanced);
      this.finish();
      render(this.refs, this.vm);
    } catch (err) {
      if (err instanceof ConnectionError) {
        // The action may or may not have landed: recover the true state.
        this.vm.status = "disconnected";
        this.vm.banner = "connection lost during play — resyncing";
        render(this.refs, this.vm);
        await this.sync();
        return;
      }
      this.fail(err);
      render(this.refs, this.vm);
    }
  }

  // -- internals -------------------------------------------------------------

  private begin(): void {
    this.vm.status = "busy";
    this.vm.banner = null;
    this.vm.fieldErrors = {};
  }

  private finish(): void {
    this.vm.status = "connected";
    this.vm.banner = null;
  }

  private fail(err: unknown): void {
    if (err instanceof ApiError) {
      this.vm.status = "connected";
      if (err.field !== null) {
        this.vm.fieldErrors = { [err.field]: err.message };
      } else {
        this.vm.banner = `${err.code}: ${err.message}`;
      }
    } else if (err instanceof ConnectionError) {
      this.vm.status = "disconnected";
      this.vm.banner = "cannot reach the table service";
    } else {
      this.vm.status = "connected";
      this.vm.banner = err instanceof Error ? err.message : String(err);
    }
  }

  private resetTiles(): void {
    this.refs.tiles.innerHTML = "";
  }

  private sessionConfigFromForm(): Record<string, unknown> {
    const form = this.refs.sessionForm;
    const advanced = (form.elements.namedItem("config_json") as HTMLTextAreaElement).value;
    if (advanced.trim() !== "") {
      return JSON.parse(advanced) as Record<string, unknown>;
    }
    const text = (name: string): string =>
      (form.elements.namedItem(name) as HTMLInputElement | HTMLSelectElement).value;
    const config: Record<string, unknown> = { scenario: text("scenario") };
    for (const name of ["seed", "n_sets", "window"]) {
      const raw = text(name).trim();
      if (raw !== "") {
        config[name] = Number.parseInt(raw, 10);
      }
    }
    return config;
  }

  private wire(): void {
    this.refs.sessionForm.addEventListener("submit", (event) => {
      event.preventDefault();
      let config: Record<string, unknown>;
      try {
        config = this.sessionConfigFromForm();
      } catch (err) {
        this.vm.banner = `config JSON does not parse: ${
          err instanceof Error ? err.message : String(err)
        }`;
        render(this.refs, this.vm);
        return;
      }
      this.lastOperation = this.newSession(config);
    });
    this.refs.actionForm.addEventListener("submit", (event) => {
      event.preventDefault();
      this.lastOperation = this.playTurn();
    });
    this.refs.betSymbol.addEventListener("change", () => {
      const raw = this.refs.betSymbol.value;
      this.vm.pending.symbol = raw === "" ? null : Number.parseInt(raw, 10);
      delete this.vm.fieldErrors["bet.symbol"];
      render(this.refs, this.vm);
    });
    this.refs.betStake.addEventListener("input", () => {
      this.vm.pending.stake = Number(this.refs.betStake.value);
      delete this.vm.fieldErrors["bet.stake"];
      render(this.refs, this.vm);
    });
    this.refs.controls.addEventListener("input", (event) => {
      const input = event.target as HTMLInputElement;
      const match = /^control_(\d+)$/.exec(input.name);
      if (match === null) {
        return;
      }
      const index = Number.parseInt(match[1]!, 10);
      this.vm.pending.control[index] = Number(input.value);
      const readout = this.refs.controls.querySelector(
        `[data-role="control-value-${index}"]`,
      );
      if (readout !== null) {
        readout.textContent = Number(input.value).toFixed(2);
      }
      delete this.vm.fieldErrors["control"];
      render(this.refs, this.vm);
    });
  }
}

/** Current snapshot convenience accessor used by scripted drivers. */
export function currentSnapshot(app: PlayUi): Snapshot | null {
  return app.vm.snapshot;
}

export function mount(root: HTMLElement, options: PlayUiOptions): PlayUi {
  return new PlayUi(root, options);
}
