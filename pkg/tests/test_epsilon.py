"""Feedback recovery, integral checks, forecasting, applicability ratio."""
import dataclasses
import math

import numpy as np
import pytest

from kroulette.dynamics import (
    CouplingSpec,
    GameDefinition,
    HiddenBehaviorSpec,
    simulate,
)
from kroulette.epsilon import (
    EpsilonTrace,
    check_correlation_integrals,
    predict_epsilon,
    recover_epsilon,
    reapply_coupling,
    timescale_ratio,
    variation_timescale,
)
from kroulette.errors import ConfigError, NonInvertibleCouplingError


def make_trace(eps, dt=0.01, slices=None):
    eps = np.asarray(eps, dtype=float)
    if eps.ndim == 1:
        eps = eps[:, None]
    slices = slices or ((0, eps.shape[1]),)
    t = np.arange(len(eps)) * dt
    return EpsilonTrace(t=t, eps=eps, dt=dt, player_slices=slices, provenance="recovered")


def osc_game(couplings, freqs, amps=None, **hidden_params):
    params = {"frequencies": list(freqs)}
    if amps is not None:
        params["amps"] = list(amps)
    params.update(hidden_params)
    return GameDefinition(
        name="osc",
        state_dim=1,
        intention_dim=0,
        phi_rhs="decay",
        xi_rhs="zero",
        couplings=couplings,
        hidden=HiddenBehaviorSpec("oscillator", eps_state_dim=2 * len(freqs), params=params),
        initial_phi=(1.0,),
    )


# ---------------------------------------------------------------------------
# Recovery
# ---------------------------------------------------------------------------


def test_additive_recovery_zero_case():
    game = osc_game((CouplingSpec("additive", eps_dim=1),), [0.5], amps=[0.0])
    traj = simulate(game, horizon=0.5, dt=0.01)
    trace = recover_epsilon(traj, game.couplings)
    assert np.allclose(trace.eps, 0.0, atol=1e-14)


def test_additive_recovery_inverts_known_offsets():
    # u - u_pure = (sin t, cos t) must recover exactly as eps
    game = osc_game(
        (CouplingSpec("additive", eps_dim=2),),
        [1.0 / (2 * math.pi), 1.0 / (2 * math.pi)],
        phases=[0.0, math.pi / 2.0],
    )
    traj = simulate(game, horizon=2.0, dt=0.01)
    trace = recover_epsilon(traj, game.couplings)
    assert np.allclose(trace.eps[:, 0], np.sin(traj.t), atol=1e-9)
    assert np.allclose(trace.eps[:, 1], np.cos(traj.t), atol=1e-9)


def test_additive_recovery_matches_oracle_truth():
    game = osc_game((CouplingSpec("additive", eps_dim=2),), [0.4, 0.9], amps=[0.7, 0.2])
    traj = simulate(game, horizon=3.0, dt=0.01, seed=5)
    trace = recover_epsilon(traj, game.couplings)
    assert np.max(np.abs(trace.eps - traj.oracle_eps_truth())) < 1e-9
    assert trace.provenance == "recovered"


def test_affine_gain_recovery_matches_oracle_truth():
    game = osc_game(
        (CouplingSpec("affine-gain", eps_dim=2, gain_axes=(0,)),),
        [0.4, 0.9],
        amps=[0.5, 0.3],
    )
    policies = [("constant", {"value": [0.8, -0.3]})]
    traj = simulate(game, horizon=3.0, dt=0.01, policies=policies, seed=5)
    trace = recover_epsilon(traj, game.couplings)
    assert np.max(np.abs(trace.eps - traj.oracle_eps_truth())) < 1e-6


def test_round_trip_reproduces_recorded_controls():
    for cs in (
        (CouplingSpec("additive", eps_dim=2, scale=1.3),),
        (CouplingSpec("affine-gain", eps_dim=2, gain_axes=(1,)),),
    ):
        game = osc_game(cs, [0.4, 0.9], amps=[0.5, 0.3])
        policies = [("constant", {"value": [0.8, -0.3]})]
        traj = simulate(game, horizon=1.0, dt=0.01, policies=policies, seed=2)
        trace = recover_epsilon(traj, game.couplings)
        rebuilt = reapply_coupling(traj, game.couplings, trace)
        assert np.max(np.abs(rebuilt - traj.u_coupled)) < 1e-9


def test_gain_recovery_rejects_zero_pure_control():
    game = osc_game((CouplingSpec("affine-gain", eps_dim=1, gain_axes=(0,)),), [0.5])
    traj = simulate(game, horizon=0.2, dt=0.01)  # zero policy -> u_pure == 0
    with pytest.raises(NonInvertibleCouplingError) as err:
        recover_epsilon(traj, game.couplings)
    assert err.value.sample_index == 0


def test_gain_recovery_rejects_singular_gain():
    game = osc_game(
        (CouplingSpec("affine-gain", eps_dim=1, gain_axes=(0,)),),
        [0.25],
        amps=[1.0],
        phases=[-math.pi / 2.0],
    )
    # eps = sin(2 pi 0.25 t - pi/2) hits exactly -1 at t = 0 -> u == 0
    policies = [("constant", {"value": [0.7]})]
    traj = simulate(game, horizon=0.5, dt=0.01, policies=policies)
    with pytest.raises(NonInvertibleCouplingError):
        recover_epsilon(traj, game.couplings)


# ---------------------------------------------------------------------------
# Correlation integrals
# ---------------------------------------------------------------------------


def test_lin_comb_integral_flags_exact_relation():
    base = make_trace(np.sin(np.linspace(0, 7, 400)))
    doubled = make_trace(2.0 * base.eps)
    reports = check_correlation_integrals(
        [base, doubled], [("lin-comb", {"coefficients": [-2.0, 1.0]})]
    )
    assert reports[0].integral
    assert reports[0].max_abs_deviation < 1e-12


def test_independent_traces_flagged_non_integral():
    rng = np.random.default_rng(0)
    a = make_trace(np.sin(np.linspace(0, 7, 400)))
    b = make_trace(np.cos(np.linspace(0, 11, 400)) + 0.1 * rng.standard_normal(400))
    reports = check_correlation_integrals([a, b], [("lin-comb", {"coefficients": [-2.0, 1.0]})])
    assert not reports[0].integral
    assert reports[0].max_abs_deviation > 0.1


def test_zero_functional_is_always_integral():
    a = make_trace(np.sin(np.linspace(0, 7, 400)))
    reports = check_correlation_integrals([a], ["zero"])
    assert reports[0].integral
    assert reports[0].max_abs_deviation == 0.0


def test_integral_reports_invariant_under_time_shift():
    a = make_trace(np.sin(np.linspace(0, 7, 400)))
    b = make_trace(2.0 * a.eps)
    shifted = [dataclasses.replace(tr, t=tr.t + 123.456) for tr in (a, b)]
    f = [("lin-comb", {"coefficients": [-2.0, 1.0]}), "zero", "norm-difference"]
    assert check_correlation_integrals([a, b], f) == check_correlation_integrals(shifted, f)


def test_length_mismatch_rejected():
    a = make_trace(np.zeros(10))
    b = make_trace(np.zeros(11))
    with pytest.raises(ConfigError):
        check_correlation_integrals([a, b], ["zero"])


# ---------------------------------------------------------------------------
# Forecasting
# ---------------------------------------------------------------------------


def test_constant_trace_forecast_is_the_constant():
    trace = make_trace(np.full(600, 0.37))
    forecast, model = predict_epsilon(trace, delta_t=1.0, p=4, fit_window=512)
    assert forecast[0] == pytest.approx(0.37, abs=1e-12)
    assert model.fallback == (True,)


def test_linear_ramp_continues_exactly_with_order_two():
    dt = 0.01
    trace = make_trace(np.arange(600) * dt, dt=dt)
    forecast, model = predict_epsilon(trace, delta_t=0.5, p=2, fit_window=512)
    expected = (599 + 50) * dt
    assert forecast[0] == pytest.approx(expected, abs=1e-9)
    assert model.fallback == (False,)


def test_delta_zero_returns_last_observation_exactly():
    rng = np.random.default_rng(3)
    trace = make_trace(rng.standard_normal(600))
    forecast, _ = predict_epsilon(trace, delta_t=0.0, p=8)
    assert forecast[0] == trace.eps[-1, 0]


def test_oscillator_forecast_beats_persistence():
    # hold out one set length (50 steps); AR(8) must at least halve the
    # persistence RMSE on a smooth oscillatory feedback signal
    game = osc_game((CouplingSpec("additive", eps_dim=2),), [0.5, 1.25], amps=[1.0, 0.6])
    traj = simulate(game, horizon=12.0, dt=0.01, seed=7)
    trace = recover_epsilon(traj, game.couplings)
    hold = 50
    head = EpsilonTrace(
        t=trace.t[:-hold],
        eps=trace.eps[:-hold],
        dt=trace.dt,
        player_slices=trace.player_slices,
    )
    forecast, model = predict_epsilon(head, delta_t=hold * trace.dt, p=8)
    truth = trace.eps[-1]
    persistence = head.eps[-1]
    rmse_ar = float(np.sqrt(np.mean((forecast - truth) ** 2)))
    rmse_persist = float(np.sqrt(np.mean((persistence - truth) ** 2)))
    assert rmse_ar < 0.5 * rmse_persist
    assert not any(model.fallback)


def test_forecast_preconditions():
    trace = make_trace(np.zeros(100))
    with pytest.raises(ConfigError):
        predict_epsilon(trace, delta_t=0.1, p=4, fit_window=512)  # too short
    trace = make_trace(np.zeros(600))
    with pytest.raises(ConfigError):
        predict_epsilon(trace, delta_t=0.005, p=4)  # not a whole step


def test_model_json_record():
    import json

    trace = make_trace(np.full(600, 1.0))
    _, model = predict_epsilon(trace, delta_t=0.2, p=3)
    record = json.loads(model.to_json())
    assert record["order"] == 3
    assert record["window"] == 512
    assert record["fallback"] == [True]
    assert len(record["coefficients"][0]) == 3


# ---------------------------------------------------------------------------
# Timescale ratio
# ---------------------------------------------------------------------------


class FakeWord:
    def __init__(self, t_start, t_end):
        self.t_start = t_start
        self.t_end = t_end


def fake_words(n, duration):
    return [FakeWord(i * duration, (i + 1) * duration) for i in range(n)]


def test_constant_trace_gives_zero_ratio():
    trace = make_trace(np.full(1000, 2.0))
    assert timescale_ratio(trace, fake_words(10, 0.5)) == 0.0


def test_period_two_feedback_with_long_sets_not_applicable():
    dt = 0.01
    t = np.arange(60000) * dt
    trace = make_trace(np.sin(2 * np.pi * t / 2.0), dt=dt)
    ratio = timescale_ratio(trace, fake_words(20, 20.0))
    # 1/e crossing of a period-2 cosine autocorrelation: acos(1/e)/pi time units
    expected = 20.0 / (math.acos(1 / math.e) / math.pi)
    assert ratio == pytest.approx(expected, rel=0.05)
    assert ratio > 1


def test_slow_feedback_with_short_sets_applicable():
    dt = 0.01
    t = np.arange(20000) * dt
    trace = make_trace(2.5 * np.sin(2 * np.pi * t / 20.0), dt=dt)
    ratio = timescale_ratio(trace, fake_words(40, 0.5))
    assert 0 < ratio < 1


def test_variation_timescale_weights_by_variance():
    dt = 0.01
    t = np.arange(40000) * dt
    fast = 0.05 * np.sin(2 * np.pi * t / 0.2)
    slow = 2.5 * np.sin(2 * np.pi * t / 20.0)
    both = make_trace(np.column_stack([fast, slow]), dt=dt, slices=((0, 2),))
    scale = variation_timescale(both)
    # the high-variance slow channel dominates: crossing near its own scale
    assert scale > 1.0


def test_too_few_sets_rejected():
    trace = make_trace(np.sin(np.linspace(0, 10, 500)))
    with pytest.raises(ConfigError):
        timescale_ratio(trace, fake_words(2, 0.5))


def test_trace_csv_export(tmp_path):
    trace = make_trace(np.column_stack([np.arange(5.0), -np.arange(5.0)]), slices=((0, 1), (1, 2)))
    path = tmp_path / "eps.csv"
    trace.write_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t,eps_1_1,eps_2_1"
    body = np.genfromtxt(path, delimiter=",", names=True)
    assert np.allclose(body["eps_2_1"], -np.arange(5.0))
