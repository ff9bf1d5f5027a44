"""Run configuration: one JSON document describes a complete experiment.

A config names a scenario, the integration step, how many sets to play, the
word grids, the players' policies, analysis parameters, and the master seed.
Every field has a documented default; loading fills the defaults in so the
echoed copy in the output directory is self-contained.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from typing import Mapping

from .errors import ConfigError

Cuts = tuple[tuple[float, ...], ...]


def _normalize_cuts(value) -> Cuts | None:
    if value is None:
        return None
    return tuple(tuple(float(x) for x in axis) for axis in value)


def _normalize_policies(value):
    if value is None:
        return None
    out = []
    for item in value:
        if isinstance(item, str):
            out.append((item, {}))
            continue
        kind, params = item
        out.append((str(kind), _plain(params)))
    return tuple(out)


def _plain(value):
    """Recursively convert JSON-ish data to canonical python containers."""
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    return float(value)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "KR-1"
    seed: int = 0
    dt: float = 0.01
    n_sets: int = 200
    alphabet_size: int = 4
    hysteresis: float = 0.0
    transition_cuts: Cuts | None = None
    symbol_cuts: Cuts | None = None
    control_cuts: Cuts | None = None
    hidden_kind: str | None = None
    hidden_state_dim: int | None = None
    hidden_params: dict = field(default_factory=dict)
    policies: tuple | None = None
    predicate: str = "cell-return"
    predicate_params: dict = field(default_factory=dict)
    max_set_duration: float = 5.0
    window: int = 64
    n_surrogates: int = 200
    max_lag: int = 3
    bet_start_set: int = 8
    stake: float = 1.0
    ar_order: int = 8
    fit_window: int = 512
    control_min: float = -1.0
    control_max: float = 1.0
    credit_limit: float = 100.0
    out_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "transition_cuts", _normalize_cuts(self.transition_cuts))
        object.__setattr__(self, "symbol_cuts", _normalize_cuts(self.symbol_cuts))
        object.__setattr__(self, "control_cuts", _normalize_cuts(self.control_cuts))
        object.__setattr__(self, "policies", _normalize_policies(self.policies))
        object.__setattr__(self, "hidden_params", _plain(self.hidden_params))
        object.__setattr__(self, "predicate_params", _plain(self.predicate_params))

    def to_json_dict(self, include_out_dir: bool = True) -> dict:
        def cuts_out(c):
            return None if c is None else [list(axis) for axis in c]

        payload = {
            "scenario": self.scenario,
            "seed": self.seed,
            "dt": self.dt,
            "n_sets": self.n_sets,
            "alphabet_size": self.alphabet_size,
            "hysteresis": self.hysteresis,
            "transition_cuts": cuts_out(self.transition_cuts),
            "symbol_cuts": cuts_out(self.symbol_cuts),
            "control_cuts": cuts_out(self.control_cuts),
            "hidden_kind": self.hidden_kind,
            "hidden_state_dim": self.hidden_state_dim,
            "hidden_params": self.hidden_params,
            "policies": None
            if self.policies is None
            else [[kind, params] for kind, params in self.policies],
            "predicate": self.predicate,
            "predicate_params": self.predicate_params,
            "max_set_duration": self.max_set_duration,
            "window": self.window,
            "n_surrogates": self.n_surrogates,
            "max_lag": self.max_lag,
            "bet_start_set": self.bet_start_set,
            "stake": self.stake,
            "ar_order": self.ar_order,
            "fit_window": self.fit_window,
            "control_min": self.control_min,
            "control_max": self.control_max,
            "credit_limit": self.credit_limit,
        }
        if include_out_dir:
            payload["out_dir"] = self.out_dir
        return payload


_FIELD_NAMES = {f.name for f in fields(ScenarioConfig)}
_INT_FIELDS = {
    "seed",
    "n_sets",
    "alphabet_size",
    "hidden_state_dim",
    "window",
    "n_surrogates",
    "max_lag",
    "bet_start_set",
    "ar_order",
    "fit_window",
}
_FLOAT_FIELDS = {
    "dt",
    "hysteresis",
    "max_set_duration",
    "stake",
    "control_min",
    "control_max",
    "credit_limit",
}


def config_from_dict(data: Mapping) -> ScenarioConfig:
    """Build a validated config from a parsed JSON document."""
    if not isinstance(data, Mapping):
        raise ConfigError("config document must be a JSON object")
    data = dict(data)
    horizon = data.pop("horizon", None)
    unknown = sorted(set(data) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown config field {unknown[0]!r}")
    if horizon is not None and "n_sets" in data:
        raise ConfigError("n_sets: give either horizon or n_sets, not both")

    kwargs = {}
    for name, value in data.items():
        if value is None and name in {
            "transition_cuts",
            "symbol_cuts",
            "control_cuts",
            "hidden_kind",
            "hidden_state_dim",
            "policies",
            "out_dir",
        }:
            kwargs[name] = None
            continue
        try:
            if name in _INT_FIELDS:
                if isinstance(value, bool) or int(value) != value:
                    raise ValueError
                kwargs[name] = int(value)
            elif name in _FLOAT_FIELDS:
                kwargs[name] = float(value)
            else:
                kwargs[name] = value
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: expected a number, got {value!r}") from None

    config = ScenarioConfig(**kwargs)
    if horizon is not None:
        from .scenarios import scenario_clock_period

        clock = scenario_clock_period(config.scenario, config.hidden_params)
        n_sets = max(1, int(round(float(horizon) / (0.5 * clock))))
        config = replace(config, n_sets=n_sets)
    validate_config(config)
    return config


def validate_config(config: ScenarioConfig) -> None:
    """Reject impossible values and unknown registry ids, naming the field."""
    from .dynamics import HIDDEN_BEHAVIORS, POLICIES
    from .scenarios import SCENARIOS
    from .stages import PREDICATES

    def known(registry):
        return ", ".join(sorted(registry))

    if config.scenario not in SCENARIOS:
        raise ConfigError(
            f"scenario: unknown id {config.scenario!r}; registered ids: {', '.join(SCENARIOS)}"
        )
    if config.scenario == "custom":
        if config.hidden_kind is None or config.hidden_state_dim is None:
            raise ConfigError("hidden_kind: custom scenario requires hidden_kind and hidden_state_dim")
    if config.hidden_kind is not None and config.hidden_kind not in HIDDEN_BEHAVIORS:
        raise ConfigError(
            f"hidden_kind: unknown id {config.hidden_kind!r}; registered ids: {known(HIDDEN_BEHAVIORS)}"
        )
    if config.policies is not None:
        for kind, _ in config.policies:
            if kind not in POLICIES:
                raise ConfigError(
                    f"policies: unknown id {kind!r}; registered ids: {known(POLICIES)}"
                )
    if config.predicate not in PREDICATES:
        raise ConfigError(
            f"predicate: unknown id {config.predicate!r}; registered ids: {known(PREDICATES)}"
        )
    if not 0 <= config.seed < 2**64:
        raise ConfigError("seed: must fit in 64 unsigned bits")
    if config.dt <= 0:
        raise ConfigError("dt: must be positive")
    if config.n_sets < 1:
        raise ConfigError("n_sets: must be at least 1")
    if config.alphabet_size < 2:
        raise ConfigError("alphabet_size: must be at least 2")
    if config.hysteresis < 0:
        raise ConfigError("hysteresis: must be nonnegative")
    if config.max_set_duration <= 0:
        raise ConfigError("max_set_duration: must be positive")
    if config.window < 8:
        raise ConfigError("window: must be at least 8 words")
    if config.n_surrogates < 200:
        raise ConfigError("n_surrogates: must be at least 200")
    if config.max_lag < 0:
        raise ConfigError("max_lag: must be nonnegative")
    if config.bet_start_set < 3:
        raise ConfigError("bet_start_set: must be at least 3")
    if config.stake <= 0:
        raise ConfigError("stake: must be positive")
    if config.ar_order < 1:
        raise ConfigError("ar_order: must be positive")
    if config.fit_window <= config.ar_order:
        raise ConfigError("fit_window: must exceed ar_order")
    if not config.control_min < config.control_max:
        raise ConfigError("control_min: bounds must satisfy control_min < control_max")
    if config.credit_limit < 0:
        raise ConfigError("credit_limit: must be nonnegative")


def load_config(path) -> ScenarioConfig:
    """Read, parse, and validate a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return config_from_dict(data)


def emit_config(config: ScenarioConfig, path, include_out_dir: bool = True) -> None:
    """Write the config (defaults filled) as formatted JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_json_dict(include_out_dir=include_out_dir), fh, indent=2, sort_keys=True)
        fh.write("\n")
