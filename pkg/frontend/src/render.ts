/**
 * DOM construction and reconciliation for the play table.
 *
 * Rendering rules this module guarantees:
 *  - word tiles are append-only: a tile, once added, is never removed or
 *    restyled by later syncs;
 *  - every input is disabled while a request is in flight;
 *  - the resonance meter sits at zero until the first full window exists,
 *    and switches to its alert styling exactly when the server says
 *    `detected` is true.
 */

import type { Snapshot } from "./api";
import type { PendingAction, ViewModel } from "./state";

/**
 * Fixed symbol → tile color mapping, using the Okabe–Ito palette, which
 * remains distinguishable under the common forms of color-vision
 * deficiency. Tiles additionally print the symbol digit, so color is never
 * the only carrier. Symbols beyond eight wrap around.
 */
export const SYMBOL_COLORS: readonly string[] = [
  "#0072B2", // blue
  "#E69F00", // orange
  "#009E73", // green
  "#CC79A7", // pink
  "#56B4E9", // sky blue
  "#D55E00", // vermillion
  "#F0E442", // yellow
  "#999999", // grey
];

/** Text color paired with each entry of SYMBOL_COLORS for contrast. */
const TEXT_COLORS: readonly string[] = [
  "#ffffff",
  "#000000",
  "#ffffff",
  "#000000",
  "#000000",
  "#ffffff",
  "#000000",
  "#000000",
];

export function symbolColor(symbol: number): string {
  return SYMBOL_COLORS[symbol % SYMBOL_COLORS.length]!;
}

export interface Refs {
  root: HTMLElement;
  status: HTMLElement;
  sessionForm: HTMLFormElement;
  table: HTMLElement;
  phase: HTMLElement;
  meter: HTMLElement;
  meterFill: HTMLElement;
  meterMarker: HTMLElement;
  meterLabel: HTMLElement;
  balance: HTMLElement;
  delta: HTMLElement;
  sparkline: SVGPolylineElement;
  tiles: HTMLOListElement;
  actionForm: HTMLFormElement;
  betSymbol: HTMLSelectElement;
  betStake: HTMLInputElement;
  controls: HTMLElement;
  play: HTMLButtonElement;
}

const LAYOUT = `
  <div data-role="status" class="kr-status" aria-live="polite" hidden></div>
  <form data-role="session-form" class="kr-session-form">
    <label>scenario
      <select name="scenario">
        <option value="KR-1">KR-1</option>
        <option value="KR-1R">KR-1R</option>
      </select>
    </label>
    <label>seed <input name="seed" type="number" value="1" step="1"></label>
    <label>sets <input name="n_sets" type="number" value="20" step="1" min="1"></label>
    <label>window <input name="window" type="number" value="16" step="1" min="2"></label>
    <label class="kr-advanced">config JSON (overrides the fields above)
      <textarea name="config_json" rows="2" placeholder='{"scenario": "KR-1R", "seed": 7}'></textarea>
    </label>
    <button type="submit" data-role="create">New session</button>
  </form>
  <section data-role="table" class="kr-table" hidden>
    <div class="kr-strip">
      <span data-role="phase" data-phase=""></span>
      <span class="kr-balance-box">balance
        <strong data-role="balance">0.00</strong>
        <span data-role="delta" class="kr-delta" aria-live="polite"></span>
      </span>
      <svg data-role="sparkline-box" class="kr-sparkline" viewBox="0 0 120 28"
           preserveAspectRatio="none" role="img" aria-label="balance history">
        <polyline data-role="sparkline" fill="none" stroke="currentColor" stroke-width="1.5" points=""></polyline>
      </svg>
    </div>
    <div data-role="meter" class="kr-meter" data-detected="false"
         role="meter" aria-label="resonance">
      <div data-role="meter-fill" class="kr-meter-fill" style="width: 0%"></div>
      <div data-role="meter-marker" class="kr-meter-marker" hidden></div>
      <span data-role="meter-label" class="kr-meter-label">resonance —</span>
    </div>
    <ol data-role="tiles" class="kr-tiles" aria-label="word history"></ol>
    <form data-role="action-form" class="kr-action-form">
      <label>bet
        <select name="bet_symbol"><option value="">no bet</option></select>
      </label>
      <span class="kr-error" data-error-for="bet.symbol"></span>
      <label>stake <input name="bet_stake" type="number" value="1" min="0" step="any"></label>
      <span class="kr-error" data-error-for="bet.stake"></span>
      <div data-role="controls" class="kr-controls"></div>
      <span class="kr-error" data-error-for="control"></span>
      <button type="submit" data-role="play">Play set</button>
    </form>
  </section>
`;

function find<T extends Element>(root: HTMLElement, selector: string): T {
  const el = root.querySelector(selector);
  if (el === null) {
    throw new Error(`layout is missing ${selector}`);
  }
  return el as T;
}

/** Build the static page skeleton inside `root` and collect element refs. */
export function buildLayout(root: HTMLElement): Refs {
  root.innerHTML = LAYOUT;
  return {
    root,
    status: find(root, '[data-role="status"]'),
    sessionForm: find(root, '[data-role="session-form"]'),
    table: find(root, '[data-role="table"]'),
    phase: find(root, '[data-role="phase"]'),
    meter: find(root, '[data-role="meter"]'),
    meterFill: find(root, '[data-role="meter-fill"]'),
    meterMarker: find(root, '[data-role="meter-marker"]'),
    meterLabel: find(root, '[data-role="meter-label"]'),
    balance: find(root, '[data-role="balance"]'),
    delta: find(root, '[data-role="delta"]'),
    sparkline: find(root, '[data-role="sparkline"]'),
    tiles: find(root, '[data-role="tiles"]'),
    actionForm: find(root, '[data-role="action-form"]'),
    betSymbol: find(root, 'select[name="bet_symbol"]'),
    betStake: find(root, 'input[name="bet_stake"]'),
    controls: find(root, '[data-role="controls"]'),
    play: find(root, '[data-role="play"]'),
  };
}

/**
 * (Re)build the per-session parts of the form: one bet option per alphabet
 * symbol and one slider per control component, ranged by the snapshot's
 * bounds.
 */
export function configureTable(
  refs: Refs,
  snapshot: Snapshot,
  pending: PendingAction,
): void {
  refs.table.hidden = false;
  refs.betSymbol.innerHTML = '<option value="">no bet</option>';
  for (let s = 0; s < snapshot.alphabet_size; s += 1) {
    const option = refs.betSymbol.ownerDocument.createElement("option");
    option.value = String(s);
    option.textContent = String(s);
    refs.betSymbol.appendChild(option);
  }
  refs.betSymbol.value = pending.symbol === null ? "" : String(pending.symbol);
  refs.betStake.value = String(pending.stake);
  refs.controls.innerHTML = "";
  const { control_min, control_max } = snapshot.bounds;
  pending.control.forEach((value, i) => {
    const doc = refs.controls.ownerDocument;
    const label = doc.createElement("label");
    label.append(`u${i + 1} `);
    const input = doc.createElement("input");
    input.type = "range";
    input.name = `control_${i}`;
    input.min = String(control_min);
    input.max = String(control_max);
    input.step = "any";
    input.value = String(value);
    label.appendChild(input);
    const readout = doc.createElement("span");
    readout.dataset.role = `control-value-${i}`;
    readout.textContent = value.toFixed(2);
    label.appendChild(readout);
    refs.controls.appendChild(label);
  });
}

function renderStatus(refs: Refs, vm: ViewModel): void {
  const text =
    vm.banner ?? (vm.status === "disconnected" ? "connection lost — retrying…" : null);
  refs.status.hidden = text === null;
  refs.status.textContent = text ?? "";
  refs.status.classList.toggle("kr-status-bad", text !== null);
}

function renderMeter(refs: Refs, snapshot: Snapshot | null): void {
  const mi = snapshot?.resonance.mi ?? null;
  const threshold = snapshot?.resonance.threshold ?? null;
  const detected = snapshot?.resonance.detected ?? false;
  if (mi === null || threshold === null) {
    refs.meterFill.style.width = "0%";
    refs.meterMarker.hidden = true;
    refs.meterLabel.textContent = "resonance —";
  } else {
    // Scale: the threshold sits at mid-meter, so the fill crosses the
    // marker exactly when the statistic crosses the detection threshold.
    const span = threshold > 0 ? 2 * threshold : Math.max(2 * mi, 1e-12);
    const fraction = Math.max(0, Math.min(1, mi / span));
    refs.meterFill.style.width = `${(100 * fraction).toFixed(1)}%`;
    refs.meterMarker.hidden = false;
    refs.meterMarker.style.left = "50%";
    refs.meterLabel.textContent = `MI ${mi.toFixed(3)} · p95 ${threshold.toFixed(3)}`;
  }
  refs.meter.dataset.detected = String(detected);
  refs.meter.classList.toggle("kr-alert", detected);
}

function renderSparkline(refs: Refs, history: number[]): void {
  const w = 120;
  const h = 28;
  const pad = 2;
  if (history.length === 0) {
    refs.sparkline.setAttribute("points", "");
    return;
  }
  const min = Math.min(...history);
  const max = Math.max(...history);
  const spread = max - min;
  const points = history.map((balance, i) => {
    const x =
      history.length === 1 ? w / 2 : pad + (i * (w - 2 * pad)) / (history.length - 1);
    const y =
      spread === 0 ? h / 2 : pad + (1 - (balance - min) / spread) * (h - 2 * pad);
    return `${x.toFixed(1)},${y.toFixed(1)}`;
  });
  refs.sparkline.setAttribute("points", points.join(" "));
}

function renderTiles(refs: Refs, snapshot: Snapshot | null): void {
  if (snapshot === null) {
    return;
  }
  // Append-only: start from the first word we have not drawn yet.
  for (let i = refs.tiles.children.length; i < snapshot.words.length; i += 1) {
    const word = snapshot.words[i]!;
    const tile = refs.tiles.ownerDocument.createElement("li");
    tile.className = "kr-tile";
    tile.dataset.n = String(word.n);
    tile.dataset.symbol = String(word.omega_symbol);
    tile.textContent = String(word.omega_symbol);
    const paletteIndex = word.omega_symbol % SYMBOL_COLORS.length;
    tile.style.backgroundColor = SYMBOL_COLORS[paletteIndex]!;
    tile.style.color = TEXT_COLORS[paletteIndex]!;
    tile.title = `set ${word.n}: symbol ${word.omega_symbol}`;
    refs.tiles.appendChild(tile);
  }
}

function renderErrors(refs: Refs, vm: ViewModel): void {
  for (const span of refs.root.querySelectorAll<HTMLElement>("[data-error-for]")) {
    const key = span.dataset.errorFor!;
    span.textContent = vm.fieldErrors[key] ?? "";
  }
}

function renderInputs(refs: Refs, vm: ViewModel): void {
  const busy = vm.status === "busy";
  const finished = vm.snapshot?.phase === "finished";
  const fields: (HTMLInputElement | HTMLSelectElement | HTMLButtonElement)[] = [
    refs.betSymbol,
    refs.betStake,
    refs.play,
    ...refs.controls.querySelectorAll<HTMLInputElement>("input"),
  ];
  for (const field of fields) {
    field.disabled = busy || Boolean(finished);
  }
  for (const field of refs.sessionForm.querySelectorAll<HTMLInputElement>(
    "input, select, textarea, button",
  )) {
    field.disabled = busy;
  }
}

/** Reconcile the DOM with the view model. */
export function render(refs: Refs, vm: ViewModel): void {
  renderStatus(refs, vm);
  const snapshot = vm.snapshot;
  refs.table.hidden = snapshot === null;
  if (snapshot !== null) {
    refs.phase.textContent = snapshot.phase;
    refs.phase.dataset.phase = snapshot.phase;
    refs.balance.textContent = snapshot.balance.toFixed(2);
    if (vm.lastDelta === null) {
      refs.delta.textContent = "";
      refs.delta.className = "kr-delta";
    } else {
      const sign = vm.lastDelta >= 0 ? "+" : "−";
      refs.delta.textContent = `${sign}${Math.abs(vm.lastDelta).toFixed(2)}`;
      refs.delta.className = `kr-delta ${vm.lastDelta >= 0 ? "kr-win" : "kr-loss"}`;
    }
  }
  renderMeter(refs, snapshot);
  renderSparkline(refs, vm.balanceHistory);
  renderTiles(refs, snapshot);
  renderErrors(refs, vm);
  renderInputs(refs, vm);
}
