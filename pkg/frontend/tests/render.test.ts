import { beforeEach, describe, expect, it } from "vitest";

import { SYMBOL_COLORS, buildLayout, configureTable, render, symbolColor } from "../src/render";
import type { Refs } from "../src/render";
import { applySnapshot, initialViewModel } from "../src/state";
import type { ViewModel } from "../src/state";
import { makeSnapshot, makeWord } from "./helpers";

let refs: Refs;
let vm: ViewModel;

function show(partial: Parameters<typeof makeSnapshot>[0]): void {
  const snapshot = makeSnapshot(partial);
  if (vm.snapshot === null) {
    configureTable(refs, snapshot, vm.pending);
  }
  applySnapshot(vm, snapshot);
  render(refs, vm);
}

beforeEach(() => {
  document.body.innerHTML = '<div id="root"></div>';
  refs = buildLayout(document.getElementById("root") as HTMLElement);
  vm = initialViewModel(2);
  vm.sessionId = "s";
});

describe("initial state", () => {
  it("shows zero tiles and a zeroed meter for an empty history", () => {
    show({ words: [] });
    expect(refs.tiles.children.length).toBe(0);
    expect(refs.meterFill.style.width).toBe("0%");
    expect(refs.meterLabel.textContent).toBe("resonance —");
    expect(refs.meter.classList.contains("kr-alert")).toBe(false);
    expect(refs.meter.dataset.detected).toBe("false");
  });

  it("hides the table before any snapshot arrives", () => {
    render(refs, vm);
    expect(refs.table.hidden).toBe(true);
  });
});

describe("word tiles", () => {
  it("renders exactly one tile per word, in order n=1..5", () => {
    const words = [1, 2, 3, 4, 5].map((n) => makeWord(n, (n + 1) % 4));
    show({ words });
    const tiles = [...refs.tiles.children] as HTMLElement[];
    expect(tiles.length).toBe(5);
    expect(tiles.map((t) => t.dataset.n)).toEqual(["1", "2", "3", "4", "5"]);
    expect(tiles.map((t) => t.textContent)).toEqual(["2", "3", "0", "1", "2"]);
    expect(tiles.map((t) => t.dataset.symbol)).toEqual(["2", "3", "0", "1", "2"]);
  });

  it("colors tiles by the fixed palette and keeps the digit visible", () => {
    show({ words: [makeWord(1, 0), makeWord(2, 3)] });
    const tiles = [...refs.tiles.children] as HTMLElement[];
    const toHex = (css: string): string => {
      const m = /^rgb\((\d+), (\d+), (\d+)\)$/.exec(css);
      if (m === null) {
        return css;
      }
      const part = (s: string) => Number(s).toString(16).padStart(2, "0");
      return `#${part(m[1]!)}${part(m[2]!)}${part(m[3]!)}`.toUpperCase();
    };
    expect(toHex(tiles[0]!.style.backgroundColor).toUpperCase()).toBe(SYMBOL_COLORS[0]);
    expect(toHex(tiles[1]!.style.backgroundColor).toUpperCase()).toBe(SYMBOL_COLORS[3]);
    expect(tiles[0]!.textContent).toBe("0");
    expect(tiles[1]!.textContent).toBe("3");
  });

  it("appends tiles across syncs without touching existing ones", () => {
    const first = [makeWord(1, 0), makeWord(2, 1), makeWord(3, 2)];
    show({ words: first, set_index: 3 });
    const before = [...refs.tiles.children];
    show({
      words: [...first, makeWord(4, 3), makeWord(5, 0)],
      set_index: 5,
    });
    const after = [...refs.tiles.children];
    expect(after.length).toBe(5);
    for (let i = 0; i < 3; i += 1) {
      expect(after[i]).toBe(before[i]);
    }
  });

  it("never removes tiles, even if a snapshot shrinks", () => {
    show({ words: [makeWord(1, 0), makeWord(2, 1)], set_index: 2 });
    show({ words: [makeWord(1, 0)], set_index: 2 });
    expect(refs.tiles.children.length).toBe(2);
  });

  it("wraps symbols beyond the palette length", () => {
    expect(symbolColor(0)).toBe(SYMBOL_COLORS[0]);
    expect(symbolColor(SYMBOL_COLORS.length)).toBe(SYMBOL_COLORS[0]);
    expect(symbolColor(SYMBOL_COLORS.length + 2)).toBe(SYMBOL_COLORS[2]);
  });
});

describe("resonance meter", () => {
  it("fills below the marker while the statistic is under threshold", () => {
    show({ resonance: { mi: 0.1, threshold: 0.4, detected: false } });
    expect(refs.meterFill.style.width).toBe("12.5%");
    expect(refs.meterMarker.hidden).toBe(false);
    expect(refs.meterLabel.textContent).toBe("MI 0.100 · p95 0.400");
    expect(refs.meter.classList.contains("kr-alert")).toBe(false);
  });

  it("switches to the alert styling when detected", () => {
    show({ resonance: { mi: 0.9, threshold: 0.4, detected: true } });
    expect(refs.meter.classList.contains("kr-alert")).toBe(true);
    expect(refs.meter.dataset.detected).toBe("true");
    expect(refs.meterFill.style.width).toBe("100%");
  });

  it("returns to zero when the indicator is not yet live", () => {
    show({ resonance: { mi: 0.9, threshold: 0.4, detected: true } });
    show({ resonance: { mi: null, threshold: null, detected: false } });
    expect(refs.meterFill.style.width).toBe("0%");
    expect(refs.meter.classList.contains("kr-alert")).toBe(false);
  });
});

describe("balance and sparkline", () => {
  it("shows the latest balance and the settled-set delta", () => {
    show({ balance: 0, set_index: 0 });
    show({ balance: 6, set_index: 1, words: [makeWord(1, 2)] });
    expect(refs.balance.textContent).toBe("6.00");
    expect(refs.delta.textContent).toBe("+6.00");
    expect(refs.delta.classList.contains("kr-win")).toBe(true);
    show({ balance: 4, set_index: 2, words: [makeWord(1, 2), makeWord(2, 0)] });
    expect(refs.balance.textContent).toBe("4.00");
    expect(refs.delta.textContent).toBe("−2.00");
    expect(refs.delta.classList.contains("kr-loss")).toBe(true);
  });

  it("draws one sparkline point per observed balance", () => {
    show({ balance: 0, set_index: 0 });
    show({ balance: 6, set_index: 1, words: [makeWord(1, 2)] });
    show({ balance: 4, set_index: 2, words: [makeWord(1, 2), makeWord(2, 0)] });
    const points = refs.sparkline.getAttribute("points")!.split(" ");
    expect(points.length).toBe(3);
  });
});

describe("input gating", () => {
  it("disables every input while a request is in flight", () => {
    show({});
    vm.status = "busy";
    render(refs, vm);
    expect(refs.play.disabled).toBe(true);
    expect(refs.betSymbol.disabled).toBe(true);
    expect(refs.betStake.disabled).toBe(true);
    for (const slider of refs.controls.querySelectorAll("input")) {
      expect(slider.disabled).toBe(true);
    }
    vm.status = "connected";
    render(refs, vm);
    expect(refs.play.disabled).toBe(false);
    expect(refs.betSymbol.disabled).toBe(false);
  });

  it("keeps the play button disabled once the match is finished", () => {
    show({ phase: "finished" });
    expect(refs.play.disabled).toBe(true);
  });
});

describe("field errors", () => {
  it("renders each error next to its field and clears it afterwards", () => {
    show({});
    vm.fieldErrors = { "bet.stake": "stake must be a finite non-negative number" };
    render(refs, vm);
    const span = refs.root.querySelector('[data-error-for="bet.stake"]')!;
    expect(span.textContent).toContain("non-negative");
    vm.fieldErrors = {};
    render(refs, vm);
    expect(span.textContent).toBe("");
  });
});
