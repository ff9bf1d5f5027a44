"""Multistage set engine: sets end by a predicate on the running position.

A match is a chain of sets over one continuously integrated game.  Each set
starts exactly where the previous one ended (same state vector, no
re-initialization), holds every player's pure control constant at the value
their policy draws for that set, and advances until a finishing predicate
fires or a safety horizon elapses.  The predicate sees exactly two things:
the current position ``phi`` and the word emitted for the interval that
ended when the set began.  When a set closes, the engine emits its word
(interval averages of the recovered feedback and of the pure controls) and
notifies the hidden layer of the boundary, passing the exact recorded
control average so latch-type behaviors stay bit-identical with the words.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .dynamics import GameDefinition, Simulator, Trajectory, build_policies
from .epsilon import invert_coupling_sample
from .errors import ConfigError, KrouletteError
from .verbalize import (
    CellPartition,
    RunningMeanFold,
    Word,
    WordSequence,
    _axis_bin,
    assign_control_symbol,
    assign_symbol,
)


@dataclass(frozen=True)
class SetRecord:
    """One completed set: boundary times, positions, and the arming word."""

    index: int
    t_begin: float
    t_end: float
    start_position: tuple[np.ndarray, np.ndarray]
    end_position: tuple[np.ndarray, np.ndarray]
    omega_at_start: Word
    finishing_reason: str

    def to_json_dict(self) -> dict:
        return {
            "index": self.index,
            "t_begin": self.t_begin,
            "t_end": self.t_end,
            "start_position": {
                "phi": [float(x) for x in self.start_position[0]],
                "xi": [float(x) for x in self.start_position[1]],
            },
            "end_position": {
                "phi": [float(x) for x in self.end_position[0]],
                "xi": [float(x) for x in self.end_position[1]],
            },
            "omega_at_start": {
                "n": self.omega_at_start.n,
                "omega_symbol": self.omega_at_start.omega_symbol,
                "omega_value": [float(x) for x in self.omega_at_start.omega_value],
            },
            "finishing_reason": self.finishing_reason,
        }


# ---------------------------------------------------------------------------
# Finishing predicates
# ---------------------------------------------------------------------------

#: predicate factories ``(params, partition, game) -> f(phi, omega_start) -> bool``
PREDICATES: dict[str, Callable] = {}


def _pred_always(params, partition, game):
    return lambda phi, word: True


def _pred_norm_exceeds(params, partition, game):
    threshold = float(params.get("threshold", 10.0))
    return lambda phi, word: bool(np.linalg.norm(phi) > threshold)


def _pred_cell_return(params, partition, game):
    """Fire when the tracked position re-enters the arming word's cell.

    ``axes`` lists the feedback axes compared (default: the first transition
    axis); ``phi_axes`` maps them onto position components (default: same
    indices).  The set ends at the first sample whose position bin equals
    the bin of the arming word's recorded value on every compared axis.
    For an alternating carrier this closes one half-wave per set: the word
    at set start summarizes the *previous* half-wave, so equality means the
    carrier has swung back.
    """
    axes = tuple(int(a) for a in params.get("axes", (0,)))
    phi_axes = tuple(int(a) for a in params.get("phi_axes", axes))
    if len(axes) != len(phi_axes):
        raise ConfigError("cell-return needs one phi axis per compared axis")
    for a in axes:
        if not 0 <= a < len(partition.cuts):
            raise ConfigError("cell-return axis outside the partition")
    cut_rows = [partition.cuts[a] for a in axes]
    if any(len(c) == 0 for c in cut_rows):
        raise ConfigError("cell-return axes must carry at least one cut")

    def f(phi, word):
        for pa, a, cuts in zip(phi_axes, axes, cut_rows):
            if _axis_bin(cuts, float(phi[pa])) != _axis_bin(cuts, float(word.omega_value[a])):
                return False
        return True

    return f


PREDICATES["always"] = _pred_always
PREDICATES["norm-exceeds"] = _pred_norm_exceeds
PREDICATES["cell-return"] = _pred_cell_return


def build_predicate(
    kind: str, params: Mapping | None, partition: CellPartition, game: GameDefinition
):
    try:
        factory = PREDICATES[kind]
    except KeyError:
        known = ", ".join(sorted(PREDICATES))
        raise ConfigError(f"unknown predicate id {kind!r}; registered ids: {known}") from None
    return factory(params or {}, partition, game)


# ---------------------------------------------------------------------------
# Match engine
# ---------------------------------------------------------------------------


class MatchEngine:
    """Drives one game through consecutive sets and emits its words.

    The engine owns a stage-driven simulator (policy sampling is replaced by
    per-set holds) and incremental interval folds for the recovered feedback
    and pure controls, so closing a set costs O(1) beyond the steps already
    taken.

    Set 0 has no previous word to arm its predicate, so the engine
    synthesizes one: the mirrored (sign-flipped) initial feedback estimate.
    A return-type predicate then waits for the carrier to swing away and
    come back instead of firing on the very first sample.
    """

    def __init__(
        self,
        game: GameDefinition,
        dt: float,
        partition: CellPartition,
        policies: Sequence | None = None,
        seed: int = 0,
        predicate: str = "cell-return",
        predicate_params: Mapping | None = None,
        max_set_duration: float = 5.0,
        capacity_hint: int | None = None,
    ):
        if max_set_duration <= 0 or not np.isfinite(max_set_duration):
            raise ConfigError("max_set_duration must be finite and positive")
        self.game = game
        self.dt = dt
        self.partition = partition
        self.seed = seed
        self.max_set_duration = max_set_duration
        self.predicate_id = predicate
        self.predicate = build_predicate(predicate, predicate_params, partition, game)
        self.sim = Simulator(
            game, dt, policies=None, seed=seed, capacity_hint=capacity_hint, stage_driven=True
        )
        self._base_policy_specs = policies
        self._policies = build_policies(game, policies, seed)
        self._slices = game.player_slices()
        self.records: list[SetRecord] = []
        self.words: list[Word] = []
        self.warnings: list[dict] = []

        u_pure0, u_coupled0 = self.sim.last_controls()
        eps0 = invert_coupling_sample(game.couplings, self._slices, u_pure0, u_coupled0, 0)
        self._eps_fold = RunningMeanFold(eps0)
        self._v_fold = RunningMeanFold(u_pure0)
        self._bootstrap_word = Word(
            n=-1,
            t_start=0.0,
            t_end=0.0,
            omega_symbol=assign_symbol(eps0, partition),
            omega_value=-eps0,
            v_symbol=assign_control_symbol(u_pure0, partition),
            v_value=u_pure0.copy(),
        )

    # -- policy scheduling ---------------------------------------------------
    def _policies_for_set(self, set_index: int, schedule: Sequence | None):
        if schedule is None:
            return self._policies
        specs = schedule[set_index % len(schedule)]
        return build_policies(self.game, specs, self.seed)

    def hold_vector_for_set(self, set_index: int, t_start: float, schedule=None) -> np.ndarray:
        """Concatenated pure-control hold the policies would use for one set."""
        policies = self._policies_for_set(set_index, schedule)
        return np.concatenate([p.hold_for_set(set_index, t_start) for p in policies])

    # -- core stepping ---------------------------------------------------------
    def run_set(
        self,
        max_duration: float | None = None,
        policy_schedule: Sequence | None = None,
        held_controls: np.ndarray | None = None,
    ) -> SetRecord:
        """Advance until the finishing predicate fires or the horizon elapses."""
        horizon = self.max_set_duration if max_duration is None else max_duration
        if not np.isfinite(horizon) or horizon <= 0:
            raise ConfigError("max_duration must be finite and positive")
        index = len(self.records)
        t_begin = self.sim.t
        start_position = (self.sim.phi.copy(), self.sim.xi.copy())
        omega_start = self.words[-1] if self.words else self._bootstrap_word
        if held_controls is not None:
            hold = np.asarray(held_controls, dtype=float)
        else:
            hold = self.hold_vector_for_set(index, t_begin, policy_schedule)
        self.sim.set_held_controls(hold)

        max_steps = max(1, int(round(horizon / self.dt)))
        reason = "horizon"
        for _ in range(max_steps):
            self.sim.step()
            u_pure, u_coupled = self.sim.last_controls()
            eps_hat = invert_coupling_sample(
                self.game.couplings, self._slices, u_pure, u_coupled, self.sim.sample_index
            )
            self._eps_fold.push(eps_hat)
            self._v_fold.push(u_pure)
            if self.predicate(self.sim.phi, omega_start):
                reason = "predicate"
                break

        t_end = self.sim.t
        omega_value = self._eps_fold.close()
        v_value = self._v_fold.close()
        word = Word(
            n=index,
            t_start=t_begin,
            t_end=t_end,
            omega_symbol=assign_symbol(omega_value, self.partition),
            omega_value=omega_value,
            v_symbol=assign_control_symbol(v_value, self.partition),
            v_value=v_value,
        )
        self.words.append(word)
        self.sim.notify_interval_end(v_value)
        record = SetRecord(
            index=index,
            t_begin=t_begin,
            t_end=t_end,
            start_position=start_position,
            end_position=(self.sim.phi.copy(), self.sim.xi.copy()),
            omega_at_start=omega_start,
            finishing_reason=reason,
        )
        self.records.append(record)
        return record

    def run_match(
        self, n_sets: int, policy_schedule: Sequence | None = None
    ) -> tuple[list[SetRecord], WordSequence]:
        """Chain ``n_sets`` sets and return their records and word sequence."""
        if n_sets < 1:
            raise ConfigError("n_sets must be at least 1")
        for _ in range(n_sets):
            index = len(self.records)
            try:
                self.run_set(policy_schedule=policy_schedule)
            except KrouletteError as exc:
                exc.args = (f"set {index}: {exc}",)
                raise
        return self.records, self.word_sequence()

    # -- outputs ----------------------------------------------------------------
    def word_sequence(self) -> WordSequence:
        return WordSequence(
            words=list(self.words),
            alphabet_size=self.partition.alphabet_size,
            control_alphabet_size=self.partition.control_alphabet_size,
            partition=self.partition,
            warnings=list(self.warnings),
        )

    def trajectory(self) -> Trajectory:
        return self.sim.trajectory()

    def write_match_log(self, path) -> None:
        """JSON lines, one set record per line."""
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record.to_json_dict()) + "\n")
