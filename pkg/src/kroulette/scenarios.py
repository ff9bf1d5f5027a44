"""Shipped scenario presets: one negative and one positive resonance control.

``KR-1`` hides independent chaotic cores behind the players' controls: its
word sequence is quasirandom and carries no control-to-word coupling, so the
resonance detector must stay quiet.  The payload channels latch once per set
(``payload_hold="interval"``) with boundaries several mixing times apart, so
consecutive word symbols are decorrelated and short-term forecasts of the
feedback carry no edge about the next word.  ``KR-1R`` swaps the cores for an
echo channel that replays player 2's per-set control average one set later —
a planted resonance the detector must find.

Both games share the same shape: two players with two feedback components
each, additive couplings, a position that tracks the coupled controls, and a
leaky per-player intention average.  The feedback layout is

* component 0 — carrier clock (drives set boundaries via cell-return);
* components 1, 2 — the symbol payload (2 x 2 alphabet of four words);
* component 3 — slow drift (dominant variance, keeps the timescale honest).

The word grids are deliberately different per role: set boundaries fire on
the clock axis, word symbols quantize the payload axes, and control symbols
quantize player 2's first pure-control component.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .dynamics import CouplingSpec, GameDefinition, HiddenBehaviorSpec
from .errors import ConfigError
from .verbalize import CellPartition

DEFAULT_TRANSITION_CUTS = ((0.0,), (), (), ())
DEFAULT_SYMBOL_CUTS = ((), (0.0,), (0.0,), ())
DEFAULT_CONTROL_CUTS = ((), (), (-0.5, 0.0, 0.5), ())

KR1_HIDDEN_PARAMS = {
    "time_scale": 8.0,
    "clock_period": 1.6,
    "clock_amp": 1.0,
    "payload_scale": 8.0,
    "payload_amp": 1.0,
    "payload_hold": "interval",
    "slow_period": 20.0,
    "slow_amp": 2.5,
    "init_jitter": 0.5,
}

KR1R_HIDDEN_PARAMS = {
    "clock_period": 1.0,
    "clock_amp": 1.0,
    "drift_period": 7.5,
    "drift_amp": 1.2,
    "echo_gain": 0.8,
    "echo_lag": 1,
    "slow_period": 20.0,
    "slow_amp": 2.5,
    "source_player": 1,
    "source_component": 0,
}

DEFAULT_POLICIES = (
    ("zero", {}),
    ("random-hold", {"levels": (-0.75, -0.25, 0.25, 0.75), "period": 0.5, "component": 0}),
)


@dataclass(frozen=True)
class ScenarioBundle:
    """Everything an engine needs for one configured scenario."""

    game: GameDefinition
    partition: CellPartition
    policies: tuple
    predicate: str
    predicate_params: Mapping
    clock_period: float


def _two_player_game(name: str, hidden: HiddenBehaviorSpec, dt: float) -> GameDefinition:
    couplings = (
        CouplingSpec(form="additive", eps_dim=2, scale=1.0),
        CouplingSpec(form="additive", eps_dim=2, scale=1.0),
    )
    return GameDefinition(
        name=name,
        state_dim=4,
        intention_dim=2,
        phi_rhs="control-tracker",
        xi_rhs="leaky-average",
        couplings=couplings,
        hidden=hidden,
        phi_params={"tau": dt / 2},
        xi_params={"tau": 1.0},
    )


def _kr1_game(hidden_params: Mapping, dt: float) -> GameDefinition:
    params = {**KR1_HIDDEN_PARAMS, **dict(hidden_params)}
    # two 3-component cores, plus one latch register per payload channel
    dim = 6 + (2 if params.get("payload_hold", "none") == "interval" else 0)
    hidden = HiddenBehaviorSpec(kind="lorenz-like", eps_state_dim=dim, params=params)
    return _two_player_game("KR-1", hidden, dt)


def _kr1r_game(hidden_params: Mapping, dt: float) -> GameDefinition:
    params = {**KR1R_HIDDEN_PARAMS, **dict(hidden_params)}
    lag = int(params.get("echo_lag", 1))
    hidden = HiddenBehaviorSpec(kind="lagged-mirror", eps_state_dim=lag + 3, params=params)
    return _two_player_game("KR-1R", hidden, dt)


def _custom_game(kind: str, hidden_params: Mapping, eps_state_dim: int, dt: float) -> GameDefinition:
    hidden = HiddenBehaviorSpec(kind=kind, eps_state_dim=eps_state_dim, params=dict(hidden_params))
    return _two_player_game("custom", hidden, dt)


SCENARIOS = ("KR-1", "KR-1R", "custom")


def scenario_clock_period(scenario: str, hidden_params: Mapping | None) -> float:
    """Effective carrier period after scenario defaults are merged in.

    One set spans half a carrier period (the boundary predicate fires on
    each carrier cell change), so this is what converts a requested time
    horizon into a set count.
    """
    params = dict(hidden_params or {})
    if scenario == "KR-1":
        return float(params.get("clock_period", KR1_HIDDEN_PARAMS["clock_period"]))
    if scenario == "KR-1R":
        return float(params.get("clock_period", KR1R_HIDDEN_PARAMS["clock_period"]))
    return float(params.get("clock_period", 1.0))


def scenario_bundle(config) -> ScenarioBundle:
    """Materialize a validated config into a runnable game + analysis setup."""
    if config.scenario not in SCENARIOS:
        raise ConfigError(
            f"unknown scenario {config.scenario!r}; registered ids: {', '.join(SCENARIOS)}"
        )
    hidden_params = dict(config.hidden_params or {})
    clock_period = scenario_clock_period(config.scenario, hidden_params)
    if config.scenario == "KR-1":
        game = _kr1_game(hidden_params, config.dt)
    elif config.scenario == "KR-1R":
        game = _kr1r_game(hidden_params, config.dt)
    else:
        if config.hidden_kind is None:
            raise ConfigError("custom scenario requires hidden_kind")
        if config.hidden_state_dim is None:
            raise ConfigError("custom scenario requires hidden_state_dim")
        game = _custom_game(config.hidden_kind, hidden_params, config.hidden_state_dim, config.dt)

    partition = CellPartition(
        cuts=config.transition_cuts if config.transition_cuts is not None else DEFAULT_TRANSITION_CUTS,
        hysteresis=config.hysteresis,
        symbol_cuts=config.symbol_cuts if config.symbol_cuts is not None else DEFAULT_SYMBOL_CUTS,
        control_cuts=config.control_cuts if config.control_cuts is not None else DEFAULT_CONTROL_CUTS,
    )
    if partition.alphabet_size != config.alphabet_size:
        raise ConfigError(
            f"alphabet_size: symbol grid yields {partition.alphabet_size} cells, "
            f"config declares {config.alphabet_size}"
        )
    policies: Sequence = config.policies if config.policies is not None else DEFAULT_POLICIES
    return ScenarioBundle(
        game=game,
        partition=partition,
        policies=tuple(policies),
        predicate=config.predicate,
        predicate_params=dict(config.predicate_params),
        clock_period=clock_period,
    )
