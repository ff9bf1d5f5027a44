/**
 * End-to-end tests against a live session service (`kr serve`), driving the
 * real UI in jsdom:
 *  - a scripted 20-set playthrough finishes the match;
 *  - a winning bet shows a +3x-stake balance delta (alphabet 4);
 *  - a bot replaying a recorded match script through the UI reproduces the
 *    in-process forecaster's hit rate within two percentage points.
 */

import { spawn, spawnSync } from "node:child_process";
import type { ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import * as net from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, beforeEach, describe, expect, it } from "vitest";

import { SessionApi } from "../src/api";
import { PlayUi } from "../src/main";
import { choose, type } from "./helpers";

interface ReplayScript {
  config: Record<string, unknown>;
  controls: { set: number; values: number[] }[];
  bets: { set: number; symbol: number; stake: number }[];
  expected: { hit_rate: number; n_bets: number; balance: number };
}

let server: ChildProcess | null = null;
let serverLog = "";
let baseUrl = "";
let replay: ReplayScript;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = net.createServer();
    probe.on("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address() as net.AddressInfo;
      probe.close(() => resolve(address.port));
    });
  });
}

async function waitForServer(url: string, timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${url}/session/warmup-probe/snapshot`);
      if (response.status === 404) {
        return;
      }
    } catch {
      // not listening yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error(`service did not come up within ${timeoutMs} ms\n${serverLog}`);
}

beforeAll(async () => {
  const workDir = mkdtempSync(join(tmpdir(), "kr-ui-e2e-"));

  // Record a match script to replay through the UI.
  const configPath = join(workDir, "replay-cfg.json");
  writeFileSync(
    configPath,
    JSON.stringify({ scenario: "KR-1R", seed: 11, n_sets: 80, window: 32 }),
  );
  const run = spawnSync("kr", ["run", "--config", configPath, "--out", join(workDir, "run")], {
    encoding: "utf8",
    timeout: 120_000,
  });
  if (run.status !== 0) {
    throw new Error(`kr run failed (${run.status}):\n${run.stdout}\n${run.stderr}`);
  }
  replay = JSON.parse(readFileSync(join(workDir, "run", "replay.json"), "utf8"));

  const port = await freePort();
  baseUrl = `http://127.0.0.1:${port}`;
  server = spawn("kr", ["serve", "--port", String(port)], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  server.stdout!.on("data", (chunk: Buffer) => {
    serverLog += chunk.toString();
  });
  server.stderr!.on("data", (chunk: Buffer) => {
    serverLog += chunk.toString();
  });
  await waitForServer(baseUrl, 60_000);
});

afterAll(() => {
  server?.kill("SIGTERM");
});

let root: HTMLElement;

beforeEach(() => {
  document.body.innerHTML = '<div id="root"></div>';
  root = document.getElementById("root") as HTMLElement;
});

function mountLive(): PlayUi {
  return new PlayUi(root, { baseUrl });
}

function submitSession(app: PlayUi): Promise<void> {
  app.refs.sessionForm.dispatchEvent(new Event("submit", { cancelable: true }));
  return app.lastOperation;
}

function clickPlay(app: PlayUi): Promise<void> {
  app.refs.actionForm.dispatchEvent(new Event("submit", { cancelable: true }));
  return app.lastOperation;
}

function setSliders(app: PlayUi, values: number[]): void {
  const sliders = app.refs.controls.querySelectorAll("input");
  values.forEach((value, i) => {
    type(sliders[i]!, String(value));
  });
}

describe("live service playthrough", () => {
  it("finishes a scripted 20-set match through the UI", async () => {
    const app = mountLive();
    choose(
      app.refs.sessionForm.elements.namedItem("scenario") as HTMLSelectElement,
      "KR-1",
    );
    type(app.refs.sessionForm.elements.namedItem("seed") as HTMLInputElement, "3");
    type(app.refs.sessionForm.elements.namedItem("n_sets") as HTMLInputElement, "20");
    type(app.refs.sessionForm.elements.namedItem("window") as HTMLInputElement, "16");
    await submitSession(app);
    expect(app.vm.sessionId).not.toBeNull();
    expect(app.refs.phase.dataset.phase).toBe("awaiting-action");

    for (let set = 0; set < 20; set += 1) {
      choose(app.refs.betSymbol, String(set % 4));
      type(app.refs.betStake, "1");
      setSliders(app, [set % 2 === 0 ? 0.4 : -0.4, 0.1]);
      await clickPlay(app);
      expect(app.vm.snapshot!.set_index).toBe(set + 1);
      expect(app.vm.banner).toBeNull();
    }

    expect(app.refs.phase.dataset.phase).toBe("finished");
    expect(app.refs.tiles.children.length).toBe(20);
    expect(app.refs.play.disabled).toBe(true);
    // 16-set window < 20 sets, so the meter is live by the end.
    expect(app.refs.meterLabel.textContent).toMatch(/^MI /);
    expect(app.vm.balanceHistory.length).toBe(21);
  });

  it("shows a +3x-stake delta for a winning bet", async () => {
    // A twin session with the same config is deterministic, so it reveals
    // the word the bet session is about to draw.
    const config = { scenario: "KR-1", seed: 3, n_sets: 2, window: 16 };
    const scout = new SessionApi(baseUrl);
    const scouted = await scout.createSession(config);
    const revealed = await scout.advance(scouted.id);
    const upcoming = revealed.words[0]!.omega_symbol;

    const app = mountLive();
    type(
      app.refs.sessionForm.elements.namedItem("config_json") as HTMLTextAreaElement,
      JSON.stringify(config),
    );
    await submitSession(app);
    choose(app.refs.betSymbol, String(upcoming));
    type(app.refs.betStake, "2");
    setSliders(app, [0, 0]);
    await clickPlay(app);

    expect(app.refs.delta.textContent).toBe("+6.00");
    expect(app.refs.balance.textContent).toBe("6.00");
    expect(app.vm.lastDelta).toBe(6);
  });
});

describe("bot replay of a recorded match", () => {
  it("reproduces the recorded forecaster hit rate within 2 percentage points", async () => {
    const app = mountLive();
    type(
      app.refs.sessionForm.elements.namedItem("config_json") as HTMLTextAreaElement,
      JSON.stringify(replay.config),
    );
    await submitSession(app);
    expect(app.vm.sessionId).not.toBeNull();

    const betsBySet = new Map(replay.bets.map((bet) => [bet.set, bet]));
    const nSets = replay.controls.length;
    let placed = 0;
    let hits = 0;
    for (let set = 0; set < nSets; set += 1) {
      setSliders(app, replay.controls[set]!.values);
      const bet = betsBySet.get(set);
      if (bet === undefined) {
        choose(app.refs.betSymbol, "");
      } else {
        choose(app.refs.betSymbol, String(bet.symbol));
        type(app.refs.betStake, String(bet.stake));
      }
      await clickPlay(app);
      expect(app.vm.banner).toBeNull();
      expect(app.vm.snapshot!.set_index).toBe(set + 1);
      if (bet !== undefined) {
        placed += 1;
        const tile = app.refs.tiles.lastElementChild as HTMLElement;
        if (Number(tile.dataset.symbol) === bet.symbol) {
          hits += 1;
        }
      }
    }

    expect(app.refs.phase.dataset.phase).toBe("finished");
    expect(placed).toBe(replay.expected.n_bets);
    const hitRate = hits / placed;
    expect(Math.abs(hitRate - replay.expected.hit_rate)).toBeLessThanOrEqual(0.02);
    // The replayed trajectory is bit-identical, so the ledger matches too.
    expect(app.vm.snapshot!.balance).toBeCloseTo(replay.expected.balance, 6);
  });
});
