import { describe, expect, it } from "vitest";

import {
  actionFromPending,
  applySnapshot,
  initialViewModel,
  validatePending,
} from "../src/state";
import type { PendingAction } from "../src/state";
import { makeSnapshot, makeWord } from "./helpers";

const snapshot = makeSnapshot();

function pending(partial: Partial<PendingAction> = {}): PendingAction {
  return { symbol: 1, stake: 1, control: [0.2, -0.2], ...partial };
}

describe("validatePending", () => {
  it("accepts a well-formed bet with in-range controls", () => {
    expect(validatePending(pending(), snapshot)).toEqual({});
  });

  it("accepts skipping the bet entirely", () => {
    expect(validatePending(pending({ symbol: null }), snapshot)).toEqual({});
  });

  it("rejects symbols outside the alphabet", () => {
    for (const symbol of [-1, 4, 7, 1.5]) {
      const errors = validatePending(pending({ symbol }), snapshot);
      expect(errors["bet.symbol"]).toContain("[0, 4)");
    }
  });

  it("rejects non-finite or negative stakes", () => {
    for (const stake of [-1, Number.NaN, Number.POSITIVE_INFINITY]) {
      const errors = validatePending(pending({ stake }), snapshot);
      expect(errors["bet.stake"]).toContain("non-negative");
    }
  });

  it("accepts a zero stake", () => {
    expect(validatePending(pending({ stake: 0 }), snapshot)).toEqual({});
  });

  it("rejects control values outside the advertised bounds", () => {
    for (const control of [[1.5, 0], [0, -1.01], [Number.NaN, 0]]) {
      const errors = validatePending(pending({ control }), snapshot);
      expect(errors["control"]).toContain("[-1, 1]");
    }
  });

  it("validates against the bounds the snapshot advertises", () => {
    const wide = makeSnapshot({ bounds: { control_min: -3, control_max: 3 } });
    expect(validatePending(pending({ control: [2.5, -2.5] }), wide)).toEqual({});
  });
});

describe("actionFromPending", () => {
  it("omits the bet when no symbol is chosen", () => {
    const action = actionFromPending(pending({ symbol: null }));
    expect(action.bet).toBeUndefined();
    expect(action.control).toEqual([0.2, -0.2]);
  });

  it("includes bet and a copy of the controls otherwise", () => {
    const p = pending({ symbol: 2, stake: 3.5 });
    const action = actionFromPending(p);
    expect(action.bet).toEqual({ symbol: 2, stake: 3.5 });
    expect(action.control).toEqual(p.control);
    expect(action.control).not.toBe(p.control);
  });
});

describe("applySnapshot", () => {
  it("starts the balance trace at the opening balance", () => {
    const vm = initialViewModel(2);
    applySnapshot(vm, makeSnapshot({ balance: 0 }));
    expect(vm.balanceHistory).toEqual([0]);
    expect(vm.lastDelta).toBeNull();
  });

  it("records one balance per settled set and the latest delta", () => {
    const vm = initialViewModel(2);
    applySnapshot(vm, makeSnapshot({ balance: 0, set_index: 0 }));
    applySnapshot(
      vm,
      makeSnapshot({ balance: 6, set_index: 1, words: [makeWord(1, 0)] }),
    );
    expect(vm.balanceHistory).toEqual([0, 6]);
    expect(vm.lastDelta).toBe(6);
    applySnapshot(
      vm,
      makeSnapshot({
        balance: 4,
        set_index: 2,
        words: [makeWord(1, 0), makeWord(2, 1)],
      }),
    );
    expect(vm.balanceHistory).toEqual([0, 6, 4]);
    expect(vm.lastDelta).toBe(-2);
  });

  it("ignores snapshots that do not advance the match", () => {
    const vm = initialViewModel(2);
    applySnapshot(vm, makeSnapshot({ balance: 0, set_index: 1, words: [makeWord(1, 0)] }));
    applySnapshot(vm, makeSnapshot({ balance: 0, set_index: 1, words: [makeWord(1, 0)] }));
    expect(vm.balanceHistory).toEqual([0]);
  });
});
