/**
 * View model for one table: the latest server snapshot, the action the
 * player is composing, and connection bookkeeping.
 *
 * Everything shown on screen comes from the latest snapshot; the only
 * client-side accumulations are the balance trace behind the sparkline and
 * the word tiles, both of which grow append-only as snapshots arrive.
 */

import type { Action, Snapshot } from "./api";

export type ConnectionStatus = "connected" | "busy" | "disconnected";

export interface PendingAction {
  /** Symbol to bet on, or null for no bet this set. */
  symbol: number | null;
  stake: number;
  /** One value per control slider. */
  control: number[];
}

export interface ViewModel {
  sessionId: string | null;
  snapshot: Snapshot | null;
  pending: PendingAction;
  status: ConnectionStatus;
  /** Validation/server errors keyed by field ("bet.symbol", "bet.stake", "control"). */
  fieldErrors: Record<string, string>;
  /** Session-wide problem to show in the banner, or null. */
  banner: string | null;
  /** Balance observed after each settled set (index 0 = opening balance). */
  balanceHistory: number[];
  /** Balance change from the most recent settled set, or null before any. */
  lastDelta: number | null;
}

export function initialViewModel(controlDim: number): ViewModel {
  return {
    sessionId: null,
    snapshot: null,
    pending: { symbol: null, stake: 1, control: new Array(controlDim).fill(0) },
    status: "connected",
    fieldErrors: {},
    banner: null,
    balanceHistory: [],
    lastDelta: null,
  };
}

/** Fold a fresh snapshot into the model, tracking the balance trace. */
export function applySnapshot(vm: ViewModel, snapshot: Snapshot): void {
  const previous = vm.snapshot;
  if (previous === null) {
    vm.balanceHistory = [snapshot.balance];
    vm.lastDelta = null;
  } else if (snapshot.set_index > previous.set_index) {
    vm.balanceHistory.push(snapshot.balance);
    vm.lastDelta = snapshot.balance - previous.balance;
  }
  vm.snapshot = snapshot;
}

/**
 * Mirror of the server's action checks against the bounds and alphabet the
 * snapshot advertises. Returns one message per offending field; an empty
 * result means the action is safe to submit.
 */
export function validatePending(
  pending: PendingAction,
  snapshot: Snapshot,
): Record<string, string> {
  const errors: Record<string, string> = {};
  if (pending.symbol !== null) {
    if (
      !Number.isInteger(pending.symbol) ||
      pending.symbol < 0 ||
      pending.symbol >= snapshot.alphabet_size
    ) {
      errors["bet.symbol"] = `symbol must be an integer in [0, ${snapshot.alphabet_size})`;
    }
    if (!Number.isFinite(pending.stake) || pending.stake < 0) {
      errors["bet.stake"] = "stake must be a finite non-negative number";
    }
  }
  const { control_min, control_max } = snapshot.bounds;
  for (const value of pending.control) {
    if (!Number.isFinite(value) || value < control_min || value > control_max) {
      errors["control"] = `control values must lie in [${control_min}, ${control_max}]`;
      break;
    }
  }
  return errors;
}

/** Wire payload for the pending action; the bet is omitted when not placed. */
export function actionFromPending(pending: PendingAction): Action {
  const action: Action = { control: [...pending.control] };
  if (pending.symbol !== null) {
    action.bet = { symbol: pending.symbol, stake: pending.stake };
  }
  return action;
}
