"""Seeded end-to-end runs: match -> recovery -> words -> reports -> manifest.

One call plays the configured match, recovers the feedback trace from
observables, certifies the word sequence, tests for resonance, backtests the
predictive bettor, and writes every artifact with a content-hash manifest.
The manifest hash is a pure function of the config (out_dir excluded), so
re-running the same config anywhere yields the same hash.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, emit_config
from .epsilon import EpsilonTrace, recover_epsilon
from .errors import ConfigError
from .roulette import (
    BacktestResult,
    QuasirandomReport,
    ResonanceReport,
    backtest_bot,
    detect_resonance,
    quasirandomness_suite,
)
from .scenarios import ScenarioBundle, scenario_bundle
from .stages import MatchEngine, SetRecord
from .util import trapezoid_interval_mean
from .verbalize import WordSequence

STAGE_ORDER = ("simulate", "verbalize", "resonance", "bet")


def word_phi_summary(trajectory, words: WordSequence) -> np.ndarray:
    """Interval mean of the first position component over each word's span."""
    t0 = float(trajectory.t[0])
    dt = trajectory.dt
    out = np.empty(len(words))
    for k, w in enumerate(words.words):
        i0 = int(round((w.t_start - t0) / dt))
        i1 = int(round((w.t_end - t0) / dt))
        out[k] = trapezoid_interval_mean(trajectory.phi[:, 0], i0, max(i1, i0 + 1))
    return out


@dataclass
class ExperimentResult:
    config: ScenarioConfig
    bundle: ScenarioBundle
    records: list[SetRecord]
    words: WordSequence
    trajectory: object
    trace: EpsilonTrace
    quasirandom: QuasirandomReport | None
    resonance: ResonanceReport | None
    backtest: BacktestResult | None
    files: dict[str, str]
    manifest_hash: str | None
    out_dir: Path | None


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def play_match(config: ScenarioConfig) -> tuple[ScenarioBundle, MatchEngine]:
    """Build the configured engine and run every set."""
    bundle = scenario_bundle(config)
    steps_hint = int(config.n_sets * (0.5 * bundle.clock_period) / config.dt) + config.n_sets
    engine = MatchEngine(
        bundle.game,
        config.dt,
        bundle.partition,
        policies=list(bundle.policies),
        seed=config.seed,
        predicate=bundle.predicate,
        predicate_params=bundle.predicate_params,
        max_set_duration=config.max_set_duration,
        capacity_hint=steps_hint,
    )
    engine.run_match(config.n_sets)
    return bundle, engine


def replay_script(config: ScenarioConfig, bundle: ScenarioBundle, engine: MatchEngine,
                  backtest: BacktestResult | None) -> dict:
    """Everything an external client needs to reproduce this match live.

    Holds are the per-set pure-control vectors the policies actually used;
    a client driving a fresh session with the same config and these controls
    reproduces the identical word sequence, so replaying the recorded bets
    reproduces the ledger.
    """
    slices = bundle.game.player_slices()
    human = slices[-1]
    controls = []
    for record in engine.records:
        hold = engine.hold_vector_for_set(record.index, record.t_begin)
        controls.append({"set": record.index, "values": [float(x) for x in hold[human[0]:human[1]]]})
    bets = []
    expected = None
    if backtest is not None:
        bets = [
            {"set": e.set_index, "symbol": e.predicted, "stake": e.stake}
            for e in backtest.ledger.entries
        ]
        expected = {
            "hit_rate": backtest.hit_rate,
            "n_bets": backtest.n_bets,
            "balance": backtest.ledger.balance,
        }
    return {
        "config": config.to_json_dict(include_out_dir=False),
        "controls": controls,
        "bets": bets,
        "expected": expected,
    }


def run_experiment(
    config: ScenarioConfig,
    out_dir=None,
    reveal_hidden: bool = False,
    last_stage: str = "bet",
    write_manifest: bool = True,
) -> ExperimentResult:
    """Run the pipeline through ``last_stage`` and export its artifacts."""
    if last_stage not in STAGE_ORDER:
        raise ConfigError(f"unknown stage {last_stage!r}; stages: {', '.join(STAGE_ORDER)}")
    depth = STAGE_ORDER.index(last_stage)
    out = Path(out_dir) if out_dir is not None else (
        Path(config.out_dir) if config.out_dir else None
    )
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    bundle, engine = play_match(config)
    words = engine.word_sequence()
    trajectory = engine.trajectory()
    trace = recover_epsilon(trajectory, bundle.game.couplings)

    quasirandom = resonance = backtest = None
    if depth >= STAGE_ORDER.index("resonance"):
        quasirandom = quasirandomness_suite(
            words.omega_symbols, config.alphabet_size, max_lag=config.max_lag
        )
        resonance = detect_resonance(
            words.v_symbols,
            words.omega_symbols,
            phi_summary=word_phi_summary(trajectory, words),
            window=config.window,
            n_surrogates=config.n_surrogates,
            max_lag=config.max_lag,
            seed=config.seed,
        )
    if depth >= STAGE_ORDER.index("bet"):
        backtest = backtest_bot(
            trace,
            words,
            bundle.partition,
            start_set=config.bet_start_set,
            stake=config.stake,
            order=config.ar_order,
            fit_window=config.fit_window,
        )

    files: dict[str, str] = {}
    manifest_hash = None
    if out is not None:
        emit_config(config, out / "config.json", include_out_dir=False)
        trajectory.write_csv(out / "trajectory.csv")
        trace.write_csv(out / "epsilon.csv")
        if reveal_hidden:
            trajectory.write_eps_truth_csv(out / "eps_truth.csv")
        if depth >= STAGE_ORDER.index("verbalize"):
            words.write_csv(out / "words.csv")
            words.write_json(out / "words.json")
            engine.write_match_log(out / "match.jsonl")
        if quasirandom is not None:
            _write_json(out / "quasirandom.json", quasirandom.to_json_dict())
        if resonance is not None:
            _write_json(out / "resonance.json", resonance.to_json_dict())
        if backtest is not None:
            backtest.ledger.write_csv(out / "ledger.csv")
            _write_json(out / "bet.json", backtest.to_json_dict())
            _write_json(out / "replay.json", replay_script(config, bundle, engine, backtest))
        files = {p.name: _sha256(p) for p in sorted(out.iterdir()) if p.name != "manifest.json"}
        if write_manifest:
            core = {"config": config.to_json_dict(include_out_dir=False), "files": files}
            canonical = json.dumps(core, sort_keys=True, separators=(",", ":"))
            manifest_hash = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
            _write_json(out / "manifest.json", {**core, "hash": manifest_hash})

    return ExperimentResult(
        config=config,
        bundle=bundle,
        records=engine.records,
        words=words,
        trajectory=trajectory,
        trace=trace,
        quasirandom=quasirandom,
        resonance=resonance,
        backtest=backtest,
        files=files,
        manifest_hash=manifest_hash,
        out_dir=out,
    )
