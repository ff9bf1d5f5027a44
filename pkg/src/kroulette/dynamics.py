"""Joint simulation engine for differential games with hidden feedback.

A game couples three layers that are integrated together with a classical
fixed-step fourth-order Runge-Kutta scheme:

* a shared position state ``phi`` driven by coalition controls,
* an intention state ``xi`` driven by positions and interactive controls,
* a hidden subsystem that generates the feedback parameters ``eps``.

Each player submits a *pure* control ``u_pure``; the control that actually
enters the dynamics is the *interactive* control obtained by passing the pure
control through the player's coupling together with the hidden ``eps``
channel assigned to that player.  The hidden layer is the only place where
``eps`` exists in closed form: everything downstream observes only pure and
interactive controls and must reconstruct ``eps`` from those (see
``kroulette.epsilon``).

Trajectories flag the ground-truth ``eps`` as hidden.  Analysis code must
never touch :meth:`Trajectory.oracle_eps_truth`; it exists solely so test
oracles can compare reconstructions against the truth.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, IntegrationDivergedError
from .util import rng_for, substream_seed

LORENZ_SIGMA = 10.0
LORENZ_RHO = 28.0
LORENZ_BETA = 8.0 / 3.0

# Starting points close to the two lobes of the standard attractor; cores are
# staggered so independently jittered copies decorrelate immediately.
_LORENZ_BASE_POINTS = (
    (-7.5, -8.0, 26.5),
    (6.8, 7.2, 22.0),
    (-2.0, -4.5, 18.0),
    (9.5, 3.1, 30.0),
)


def _lookup(registry: Mapping[str, object], kind: str, label: str):
    try:
        return registry[kind]
    except KeyError:
        known = ", ".join(sorted(registry))
        raise ConfigError(f"unknown {label} id {kind!r}; registered ids: {known}") from None


# ---------------------------------------------------------------------------
# Couplings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingSpec:
    """How one player's pure control and ``eps`` combine.

    ``additive`` couples every component as ``u = u_pure + scale * eps``.

    ``affine-gain`` splits the components: indices listed in ``gain_axes``
    are gain-coupled, ``u_j = (1 + eps_j) * u_pure_j``, the remaining ones
    are bias-coupled, ``u_j = u_pure_j + eps_j``.  Gain and bias parts act on
    disjoint components so the map ``eps -> u`` at fixed ``u_pure`` stays
    injective, which recovery requires.
    """

    form: str
    eps_dim: int
    scale: float = 1.0
    gain_axes: tuple[int, ...] = ()

    def __post_init__(self):
        if self.form not in ("additive", "affine-gain"):
            raise ConfigError(f"unknown coupling form {self.form!r}")
        if self.eps_dim < 1:
            raise ConfigError("coupling eps_dim must be positive")
        if self.form == "additive" and self.scale == 0.0:
            raise ConfigError("additive coupling scale must be nonzero for invertibility")
        if self.form == "affine-gain":
            bad = [a for a in self.gain_axes if not 0 <= a < self.eps_dim]
            if bad:
                raise ConfigError(f"gain_axes out of range: {bad}")

    @property
    def control_dim(self) -> int:
        return self.eps_dim

    def apply(self, u_pure: np.ndarray, eps: np.ndarray) -> np.ndarray:
        if self.form == "additive":
            return u_pure + self.scale * eps
        u = u_pure + eps
        for a in self.gain_axes:
            u[a] = (1.0 + eps[a]) * u_pure[a]
        return u


@dataclass(frozen=True)
class HiddenBehaviorSpec:
    """Declaration of the hidden ``eps`` generator.

    ``eps_state_dim`` counts the full internal state (integrated components
    plus discretely updated registers).  ``params`` are interpreted by the
    behavior registered under ``kind``.
    """

    kind: str
    eps_state_dim: int
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.eps_state_dim < 1:
            raise ConfigError("eps_state_dim must be positive")


@dataclass(frozen=True)
class DelayFeedbackSpec:
    """Delayed position feedback ``dphi += gain * phi(t - delay)``.

    Games carrying one of these cannot be simulated directly; call
    :func:`augment_history_feedback` first to expand the delay into
    intention-state components.
    """

    delay: float
    gain: float = 1.0

    def __post_init__(self):
        if self.delay < 0:
            raise ConfigError("delay must be nonnegative")


@dataclass(frozen=True)
class HistoryTaps:
    """Discretized delay line produced by :func:`augment_history_feedback`."""

    n_taps: int
    shift_steps: int
    gain: float


@dataclass(frozen=True)
class GameDefinition:
    """Complete declaration of one game.

    Right-hand sides, hidden behaviors and policies are referenced by
    registry id so definitions can round-trip through configs.  ``couplings``
    has one entry per player; player ``p`` owns the contiguous block of
    control/eps components given by :meth:`player_slices`.
    """

    name: str
    state_dim: int
    intention_dim: int
    phi_rhs: str
    xi_rhs: str
    couplings: tuple[CouplingSpec, ...]
    hidden: HiddenBehaviorSpec
    phi_params: Mapping[str, object] = field(default_factory=dict)
    xi_params: Mapping[str, object] = field(default_factory=dict)
    coalitions: tuple[tuple[int, ...], ...] | None = None
    delay_feedback: DelayFeedbackSpec | None = None
    history_taps: HistoryTaps | None = None
    initial_phi: tuple[float, ...] | None = None
    initial_xi: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.state_dim < 1 or self.intention_dim < 0:
            raise ConfigError("state_dim must be >= 1 and intention_dim >= 0")
        if not self.couplings:
            raise ConfigError("a game needs at least one player coupling")
        for coalition in self.effective_coalitions():
            if not coalition:
                raise ConfigError("empty coalition")
            dims = {self.couplings[p].control_dim for p in coalition}
            if any(not 0 <= p < self.n_players for p in coalition):
                raise ConfigError("coalition references unknown player")
            if len(dims) != 1:
                raise ConfigError("coalition members must share a control dimension")

    @property
    def n_players(self) -> int:
        return len(self.couplings)

    @property
    def control_total(self) -> int:
        return sum(c.control_dim for c in self.couplings)

    @property
    def eps_total(self) -> int:
        return sum(c.eps_dim for c in self.couplings)

    def player_slices(self) -> tuple[tuple[int, int], ...]:
        bounds = []
        start = 0
        for c in self.couplings:
            bounds.append((start, start + c.control_dim))
            start += c.control_dim
        return tuple(bounds)

    def effective_coalitions(self) -> tuple[tuple[int, ...], ...]:
        if self.coalitions is not None:
            return self.coalitions
        return tuple((p,) for p in range(self.n_players))

    @property
    def base_intention_dim(self) -> int:
        if self.history_taps is None:
            return self.intention_dim
        return self.intention_dim - self.history_taps.n_taps * self.state_dim


# ---------------------------------------------------------------------------
# Right-hand-side registries
# ---------------------------------------------------------------------------

#: phi registry entries are factories ``(params, game, dt) -> f(t, phi, v)``
#: where ``v`` is the concatenation of all coalition controls.
PHI_RHS: dict[str, Callable] = {}
#: xi registry entries are factories ``(params, game, dt) -> f(t, xi, phi, u)``
#: where ``u`` concatenates all interactive controls.
XI_RHS: dict[str, Callable] = {}


def _phi_decay(params, game, dt):
    return lambda t, phi, v: -phi


def _phi_zero(params, game, dt):
    def f(t, phi, v):
        return np.zeros_like(phi)

    return f


def _phi_quadratic(params, game, dt):
    return lambda t, phi, v: phi * phi


def _phi_linear(params, game, dt):
    matrix = np.asarray(params.get("matrix"), dtype=float)
    if matrix.shape != (game.state_dim, game.state_dim):
        raise ConfigError("linear phi rhs needs a square matrix matching state_dim")
    drive = bool(params.get("drive_with_controls", False))
    if drive:
        return lambda t, phi, v: matrix @ phi + v
    return lambda t, phi, v: matrix @ phi


def _phi_control_tracker(params, game, dt):
    tau = float(params.get("tau", 0.05))
    if tau <= 0:
        raise ConfigError("control-tracker tau must be positive")
    total = sum(game.couplings[c[0]].control_dim for c in game.effective_coalitions())
    if game.state_dim != total:
        raise ConfigError(
            "control-tracker needs state_dim equal to the concatenated coalition "
            f"control dimension ({total})"
        )
    inv = 1.0 / tau
    return lambda t, phi, v: (v - phi) * inv


PHI_RHS["decay"] = _phi_decay
PHI_RHS["zero"] = _phi_zero
PHI_RHS["quadratic"] = _phi_quadratic
PHI_RHS["linear"] = _phi_linear
PHI_RHS["control-tracker"] = _phi_control_tracker


def _xi_zero(params, game, dt):
    def f(t, xi, phi, u):
        return np.zeros_like(xi)

    return f


def _xi_leaky_average(params, game, dt):
    """Slow per-player accumulator: xi_p relaxes toward mean(u_p)."""
    tau = float(params.get("tau", 2.0))
    if tau <= 0:
        raise ConfigError("leaky-average tau must be positive")
    if game.base_intention_dim != game.n_players:
        raise ConfigError("leaky-average needs intention_dim equal to the player count")
    slices = game.player_slices()
    inv = 1.0 / tau
    starts = np.array([a for a, _ in slices])
    counts = np.array([b - a for a, b in slices], dtype=float)

    def f(t, xi, phi, u):
        target = np.add.reduceat(u, starts) / counts
        return (target - xi) * inv

    return f


XI_RHS["zero"] = _xi_zero
XI_RHS["leaky-average"] = _xi_leaky_average


# ---------------------------------------------------------------------------
# Control policies
# ---------------------------------------------------------------------------

#: policy factories ``(params, dim, stream_seed) -> Policy``
POLICIES: dict[str, Callable] = {}


class Policy:
    """Deterministic pure-control stream for one player.

    ``at`` evaluates the control at an arbitrary time; ``hold_for_set``
    returns the constant vector the stage engine holds for one whole set.
    """

    def __init__(self, dim: int):
        self.dim = dim

    def at(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def hold_for_set(self, set_index: int, t_start: float) -> np.ndarray:
        return self.at(t_start)


class _ZeroPolicy(Policy):
    def __init__(self, params, dim, stream_seed):
        super().__init__(dim)
        self._value = np.zeros(dim)

    def at(self, t):
        return self._value


class _ConstantPolicy(Policy):
    def __init__(self, params, dim, stream_seed):
        super().__init__(dim)
        value = np.asarray(params.get("value", np.zeros(dim)), dtype=float)
        if value.shape != (dim,):
            raise ConfigError("constant policy value must match the control dimension")
        self._value = value

    def at(self, t):
        return self._value


class _SinusoidPolicy(Policy):
    def __init__(self, params, dim, stream_seed):
        super().__init__(dim)
        self.amp = float(params.get("amp", 0.3))
        self.period = float(params.get("period", 4.0))
        self.offset = float(params.get("offset", 0.5))
        self.component = int(params.get("component", 0))
        if self.period <= 0:
            raise ConfigError("sinusoid policy period must be positive")
        if not 0 <= self.component < dim:
            raise ConfigError("sinusoid policy component out of range")

    def at(self, t):
        u = np.zeros(self.dim)
        u[self.component] = self.offset + self.amp * math.sin(2 * math.pi * t / self.period)
        return u


class _RandomHoldPolicy(Policy):
    """Piecewise-constant levels drawn independently per hold window.

    Window ``j`` draws its level from the stream ``(stream_seed, j)`` so the
    value is a pure function of the window index: the plain simulator (which
    indexes windows by time) and the stage engine (which indexes them by set
    number) see exactly the same sequence.
    """

    def __init__(self, params, dim, stream_seed):
        super().__init__(dim)
        self.levels = tuple(float(x) for x in params.get("levels", (-0.75, -0.25, 0.25, 0.75)))
        self.period = float(params.get("period", 0.5))
        self.component = int(params.get("component", 0))
        if not self.levels:
            raise ConfigError("random-hold policy needs at least one level")
        if self.period <= 0:
            raise ConfigError("random-hold policy period must be positive")
        if not 0 <= self.component < dim:
            raise ConfigError("random-hold policy component out of range")
        self._seed = stream_seed

    def _level(self, window: int) -> float:
        pick = rng_for(self._seed, f"window.{window}").integers(0, len(self.levels))
        return self.levels[int(pick)]

    def at(self, t):
        u = np.zeros(self.dim)
        u[self.component] = self._level(int(math.floor(t / self.period + 1e-9)))
        return u

    def hold_for_set(self, set_index, t_start):
        u = np.zeros(self.dim)
        u[self.component] = self._level(set_index)
        return u


POLICIES["zero"] = _ZeroPolicy
POLICIES["constant"] = _ConstantPolicy
POLICIES["sinusoid"] = _SinusoidPolicy
POLICIES["random-hold"] = _RandomHoldPolicy


def build_policies(
    game: GameDefinition,
    policies: Sequence[str | tuple[str, Mapping]] | None,
    seed: int,
) -> list[Policy]:
    specs = policies if policies is not None else ["zero"] * game.n_players
    if len(specs) != game.n_players:
        raise ConfigError("need exactly one policy per player")
    built = []
    for p, spec in enumerate(specs):
        if isinstance(spec, str):
            kind, params = spec, {}
        else:
            kind, params = spec
        factory = _lookup(POLICIES, kind, "policy")
        stream = substream_seed(seed, f"policy.player{p}")
        built.append(factory(params, game.couplings[p].control_dim, stream))
    return built


# ---------------------------------------------------------------------------
# Hidden behaviors
# ---------------------------------------------------------------------------

HIDDEN_BEHAVIORS: dict[str, Callable] = {}


class HiddenBehavior:
    """Internal generator of the concatenated ``eps`` vector.

    The integrated part of the internal state advances with the joint RK4
    step (``ode_rhs``); registers advance discretely through ``post_step``
    (once per recorded sample) and ``interval_end`` (at stage boundaries, or
    on a fixed step clock as a fallback in plain simulation).
    """

    ode_dim = 0
    register_dim = 0

    def __init__(self, params: Mapping, eps_dims: Sequence[int], rng: np.random.Generator, dt: float):
        self.params = dict(params)
        self.eps_dims = tuple(eps_dims)
        self.eps_total = sum(eps_dims)
        self.dt = dt

    def initial_ode_state(self) -> np.ndarray:
        return np.zeros(self.ode_dim)

    def initial_registers(self) -> np.ndarray:
        return np.zeros(self.register_dim)

    def first_sample(self, registers: np.ndarray, u_pure: np.ndarray) -> None:
        pass

    def eps(self, t, h_ode, registers, phi, u_pure) -> np.ndarray:
        raise NotImplementedError

    def ode_rhs(self, t, h_ode, phi, u_pure) -> np.ndarray:
        return np.zeros(0)

    def post_step(self, t, registers, u_pure) -> None:
        pass

    def interval_end(
        self,
        registers,
        v_value: np.ndarray | None = None,
        h_ode: np.ndarray | None = None,
    ) -> None:
        pass

    def clocked_interval_steps(self) -> int | None:
        """Fallback boundary period (in steps) when no stage engine drives us."""
        return None


class OscillatorBehavior(HiddenBehavior):
    """Independent harmonic channels, one rotating pair per eps component."""

    def __init__(self, params, eps_dims, rng, dt):
        super().__init__(params, eps_dims, rng, dt)
        E = self.eps_total
        freqs = params.get("frequencies", [0.25 * (j + 1) for j in range(E)])
        amps = params.get("amps", [1.0] * E)
        phases = params.get("phases", [0.0] * E)
        jitter = float(params.get("phase_jitter", 0.0))
        if len(freqs) != E or len(amps) != E or len(phases) != E:
            raise ConfigError("oscillator needs one frequency/amp/phase per eps component")
        self.omega = 2.0 * np.pi * np.asarray(freqs, dtype=float)
        self.amps = np.asarray(amps, dtype=float)
        self.phases = np.asarray(phases, dtype=float) + jitter * rng.uniform(-np.pi, np.pi, E)
        self.ode_dim = 2 * E

    def initial_ode_state(self):
        h = np.empty(self.ode_dim)
        h[0::2] = np.sin(self.phases)
        h[1::2] = np.cos(self.phases)
        return h

    def eps(self, t, h_ode, registers, phi, u_pure):
        return self.amps * h_ode[0::2]

    def ode_rhs(self, t, h_ode, phi, u_pure):
        dh = np.empty_like(h_ode)
        dh[0::2] = self.omega * h_ode[1::2]
        dh[1::2] = -self.omega * h_ode[0::2]
        return dh


class LorenzLikeBehavior(HiddenBehavior):
    """Chaotic payload channels framed by a rhythmic carrier and a slow drift.

    Channel layout (eps_total = n_cores + 2):

    * component 0: sinusoidal carrier ``clock_amp * sin(2 pi t / clock_period
      - pi/2)`` -- the channel on which verbalization boundaries fire;
    * components 1..n_cores: bounded projections ``payload_amp *
      tanh(x_i / payload_scale)`` of independent scaled Lorenz cores at the
      standard parameters (sigma 10, rho 28, beta 8/3);
    * last component: slow sinusoidal drift, the dominant-variance channel.

    ``payload_hold`` selects how the payload channels move:

    * ``"none"`` (default): each channel exposes the instantaneous core
      projection, so the payload varies continuously within an interval;
    * ``"interval"``: each channel holds a latched projection that refreshes
      only at interval boundaries.  The core keeps evolving underneath, so
      with boundaries spaced several mixing times apart consecutive held
      values are effectively uncorrelated; the exposed field then has no
      usable memory at the interval scale.
    """

    def __init__(self, params, eps_dims, rng, dt):
        super().__init__(params, eps_dims, rng, dt)
        if self.eps_total < 3:
            raise ConfigError("lorenz-like needs at least three eps components")
        self.n_cores = self.eps_total - 2
        if self.n_cores > len(_LORENZ_BASE_POINTS):
            raise ConfigError("too many payload cores requested")
        self.time_scale = float(params.get("time_scale", 5.0))
        self.clock_period = float(params.get("clock_period", 1.0))
        self.clock_amp = float(params.get("clock_amp", 1.0))
        self.slow_period = float(params.get("slow_period", 20.0))
        self.slow_amp = float(params.get("slow_amp", 2.5))
        self.payload_scale = float(params.get("payload_scale", 8.0))
        self.payload_amp = float(params.get("payload_amp", 1.0))
        self.payload_hold = str(params.get("payload_hold", "none"))
        if self.payload_hold not in ("none", "interval"):
            raise ConfigError("payload_hold must be 'none' or 'interval'")
        jitter = float(params.get("init_jitter", 0.5))
        if min(self.time_scale, self.clock_period, self.slow_period, self.payload_scale) <= 0:
            raise ConfigError("lorenz-like periods and scales must be positive")
        self.ode_dim = 3 * self.n_cores
        self.register_dim = self.n_cores if self.payload_hold == "interval" else 0
        base = np.concatenate([_LORENZ_BASE_POINTS[i] for i in range(self.n_cores)])
        self._init = base + jitter * rng.standard_normal(self.ode_dim)
        self._wc = 2.0 * np.pi / self.clock_period
        self._ws = 2.0 * np.pi / self.slow_period

    def initial_ode_state(self):
        return self._init.copy()

    def _projection(self, h_ode, i):
        return self.payload_amp * math.tanh(h_ode[3 * i] / self.payload_scale)

    def initial_registers(self):
        if self.register_dim == 0:
            return np.zeros(0)
        return np.array([self._projection(self._init, i) for i in range(self.n_cores)])

    def eps(self, t, h_ode, registers, phi, u_pure):
        out = np.empty(self.eps_total)
        out[0] = self.clock_amp * math.sin(self._wc * t - 0.5 * math.pi)
        if self.payload_hold == "interval":
            out[1 : 1 + self.n_cores] = registers
        else:
            for i in range(self.n_cores):
                out[1 + i] = self._projection(h_ode, i)
        out[self.eps_total - 1] = self.slow_amp * math.sin(self._ws * t - 0.5 * math.pi)
        return out

    def interval_end(self, registers, v_value=None, h_ode=None):
        if self.payload_hold == "interval" and h_ode is not None:
            for i in range(self.n_cores):
                registers[i] = self._projection(h_ode, i)

    def clocked_interval_steps(self):
        if self.payload_hold == "interval":
            return max(1, round(0.5 * self.clock_period / self.dt))
        return None

    def ode_rhs(self, t, h_ode, phi, u_pure):
        out = np.empty(self.ode_dim)
        ts = self.time_scale
        vals = h_ode.tolist()
        for i in range(self.n_cores):
            j = 3 * i
            x, y, z = vals[j], vals[j + 1], vals[j + 2]
            out[j] = ts * (LORENZ_SIGMA * (y - x))
            out[j + 1] = ts * (x * (LORENZ_RHO - z) - y)
            out[j + 2] = ts * (x * y - LORENZ_BETA * z)
        return out


class LaggedMirrorBehavior(HiddenBehavior):
    """Echo channel: one player's recorded control average resurfaces later.

    Channel layout (eps_total must be 4): carrier clock, echo, slow drift,
    very slow drift.  At every interval boundary the time average of the
    source player's pure control over the closing interval is latched; the
    echo channel replays the latch from ``echo_lag`` intervals ago scaled by
    ``echo_gain``.  When a stage engine drives the game it passes the exact
    recorded average; in plain simulation the behavior latches itself every
    ``hold_steps`` steps from its own trapezoid accumulator.

    Registers: ``[latch_0 .. latch_{L-1}, acc, count, last_sample]`` with
    ``latch_0`` the most recent interval average.
    """

    def __init__(self, params, eps_dims, rng, dt):
        super().__init__(params, eps_dims, rng, dt)
        if self.eps_total != 4:
            raise ConfigError("lagged-mirror is defined for exactly four eps components")
        self.clock_period = float(params.get("clock_period", 1.0))
        self.clock_amp = float(params.get("clock_amp", 1.0))
        self.drift_period = float(params.get("drift_period", 7.5))
        self.drift_amp = float(params.get("drift_amp", 1.2))
        self.echo_gain = float(params.get("echo_gain", 0.8))
        self.echo_lag = int(params.get("echo_lag", 1))
        self.slow_period = float(params.get("slow_period", 20.0))
        self.slow_amp = float(params.get("slow_amp", 2.5))
        self.source_player = int(params.get("source_player", 1))
        self.source_component = int(params.get("source_component", 0))
        hold = params.get("hold_steps")
        self.hold_steps = int(hold) if hold is not None else max(1, round(0.5 * self.clock_period / dt))
        if self.echo_lag < 1:
            raise ConfigError("echo_lag must be at least one interval")
        if min(self.clock_period, self.drift_period, self.slow_period) <= 0:
            raise ConfigError("lagged-mirror periods must be positive")
        if not 0 <= self.source_player < len(self.eps_dims):
            raise ConfigError("lagged-mirror source player out of range")
        starts = np.cumsum([0] + [d for d in eps_dims])
        self._src_index = int(starts[self.source_player] + self.source_component)
        self.register_dim = self.echo_lag + 3
        self._wc = 2.0 * np.pi / self.clock_period
        self._wd = 2.0 * np.pi / self.drift_period
        self._ws = 2.0 * np.pi / self.slow_period

    def source_concat_index(self) -> int:
        return self._src_index

    def first_sample(self, registers, u_pure):
        registers[-3] = 0.5 * u_pure[self._src_index]
        registers[-2] = 0.0
        registers[-1] = u_pure[self._src_index]

    def eps(self, t, h_ode, registers, phi, u_pure):
        out = np.empty(4)
        out[0] = self.clock_amp * math.sin(self._wc * t - 0.5 * math.pi)
        out[1] = self.echo_gain * registers[self.echo_lag - 1]
        out[2] = self.drift_amp * math.sin(self._wd * t - 0.5 * math.pi)
        out[3] = self.slow_amp * math.sin(self._ws * t - 0.5 * math.pi)
        return out

    def post_step(self, t, registers, u_pure):
        sample = u_pure[self._src_index]
        registers[-3] += sample
        registers[-2] += 1.0
        registers[-1] = sample

    def interval_end(self, registers, v_value=None, h_ode=None):
        if v_value is not None:
            closed = float(v_value[self._src_index])
        elif registers[-2] > 0:
            closed = (registers[-3] - 0.5 * registers[-1]) / registers[-2]
        else:
            closed = registers[0]
        registers[1 : self.echo_lag] = registers[0 : self.echo_lag - 1]
        registers[0] = closed
        registers[-3] = 0.5 * registers[-1]
        registers[-2] = 0.0

    def clocked_interval_steps(self):
        return self.hold_steps


HIDDEN_BEHAVIORS["oscillator"] = OscillatorBehavior
HIDDEN_BEHAVIORS["lorenz-like"] = LorenzLikeBehavior
HIDDEN_BEHAVIORS["lagged-mirror"] = LaggedMirrorBehavior


def build_hidden(game: GameDefinition, seed: int, dt: float) -> HiddenBehavior:
    spec = game.hidden
    factory = _lookup(HIDDEN_BEHAVIORS, spec.kind, "hidden behavior")
    eps_dims = [c.eps_dim for c in game.couplings]
    behavior = factory(spec.params, eps_dims, rng_for(seed, "hidden"), dt)
    actual = behavior.ode_dim + behavior.register_dim
    if actual != spec.eps_state_dim:
        raise ConfigError(
            f"hidden behavior {spec.kind!r} has internal dimension {actual}, "
            f"spec declares {spec.eps_state_dim}"
        )
    return behavior


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Uniformly sampled record of one simulation.

    ``u_pure`` and ``u_coupled`` concatenate per-player control blocks (see
    ``player_slices``).  The ground-truth eps samples are stored privately;
    :meth:`oracle_eps_truth` is reserved for test oracles and hidden-reveal
    exports, analysis modules must reconstruct eps from the controls instead.
    """

    t: np.ndarray
    phi: np.ndarray
    xi: np.ndarray
    u_pure: np.ndarray
    u_coupled: np.ndarray
    dt: float
    game_name: str
    seed: int
    player_slices: tuple[tuple[int, int], ...]
    _eps_truth: np.ndarray = dataclasses.field(repr=False, default=None)

    def __post_init__(self):
        if self.t.ndim != 1 or len(self.t) < 1:
            raise ValueError("trajectory needs at least one sample")
        steps = np.diff(self.t)
        if len(steps) and (steps.min() <= 0 or not np.allclose(steps, self.dt, rtol=0, atol=1e-9)):
            raise ValueError("trajectory times must increase uniformly by dt")

    @property
    def n_samples(self) -> int:
        return len(self.t)

    def oracle_eps_truth(self) -> np.ndarray:
        """Ground-truth eps samples. Test-oracle and reveal-export use only."""
        return self._eps_truth

    def control_header(self, prefix: str) -> list[str]:
        names = []
        for p, (a, b) in enumerate(self.player_slices):
            names.extend(f"{prefix}_{p + 1}_{c + 1}" for c in range(b - a))
        return names

    def write_csv(self, path) -> None:
        header = (
            ["t"]
            + [f"phi_{i + 1}" for i in range(self.phi.shape[1])]
            + [f"xi_{i + 1}" for i in range(self.xi.shape[1])]
            + self.control_header("upure")
            + self.control_header("ucoup")
        )
        body = np.column_stack([self.t, self.phi, self.xi, self.u_pure, self.u_coupled])
        _write_csv(path, header, body)

    def write_eps_truth_csv(self, path) -> None:
        names = []
        for p, (a, b) in enumerate(self.player_slices):
            names.extend(f"eps_{p + 1}_{c + 1}" for c in range(b - a))
        _write_csv(path, ["t"] + names, np.column_stack([self.t, self._eps_truth]))


def _write_csv(path, header: list[str], body: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in body:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def _read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        body = np.array(
            [[float(x) for x in line.strip().split(",")] for line in fh if line.strip()]
        )
    return header, body


def _slices_from_names(names: list[str], prefix: str) -> tuple[tuple[int, int], ...]:
    """Recover per-player block bounds from ``prefix_p_c`` column names."""
    counts: dict[int, int] = {}
    for name in names:
        parts = name.split("_")
        if len(parts) != 3 or parts[0] != prefix:
            raise ConfigError(f"unexpected control column {name!r}")
        counts[int(parts[1])] = counts.get(int(parts[1]), 0) + 1
    slices, lo = [], 0
    for player in sorted(counts):
        slices.append((lo, lo + counts[player]))
        lo += counts[player]
    return tuple(slices)


def read_trajectory_csv(path, game_name: str = "", seed: int = 0) -> Trajectory:
    """Rebuild a trajectory from its CSV export.

    The column layout is self-describing; the export carries no game metadata
    or hidden ground truth, so ``game_name``/``seed`` are caller-supplied and
    the oracle channel of the result is empty.
    """
    header, body = _read_csv(path)
    if not header or header[0] != "t":
        raise ConfigError(f"unexpected trajectory CSV header: {header[:3]}")
    n_phi = sum(1 for h in header if h.startswith("phi_"))
    n_xi = sum(1 for h in header if h.startswith("xi_"))
    pure_names = [h for h in header if h.startswith("upure_")]
    coup_names = [h for h in header if h.startswith("ucoup_")]
    if 1 + n_phi + n_xi + len(pure_names) + len(coup_names) != len(header):
        raise ConfigError("trajectory CSV has unrecognized columns")
    slices = _slices_from_names(pure_names, "upure")
    if slices != _slices_from_names(coup_names, "ucoup"):
        raise ConfigError("pure and coupled control layouts disagree")
    t = body[:, 0]
    lo = 1 + n_phi + n_xi
    U = len(pure_names)
    dt = float(t[1] - t[0]) if len(t) > 1 else 1.0
    return Trajectory(
        t=t,
        phi=body[:, 1 : 1 + n_phi],
        xi=body[:, 1 + n_phi : lo],
        u_pure=body[:, lo : lo + U],
        u_coupled=body[:, lo + U : lo + 2 * U],
        dt=dt,
        game_name=game_name,
        seed=seed,
        player_slices=slices,
    )


# ---------------------------------------------------------------------------
# Simulator
# ---------------------------------------------------------------------------


class Simulator:
    """Stateful stepper for one game.

    All randomness is fixed at construction (seed fan-out per module), after
    which stepping is fully deterministic: identical seeds produce
    byte-identical trajectories.
    """

    def __init__(
        self,
        game: GameDefinition,
        dt: float,
        policies: Sequence | None = None,
        seed: int = 0,
        capacity_hint: int | None = None,
        stage_driven: bool = False,
    ):
        if dt <= 0:
            raise ConfigError("dt must be positive")
        if game.delay_feedback is not None and game.delay_feedback.delay > 0:
            raise ConfigError(
                "game declares a delay feedback; expand it with augment_history_feedback first"
            )
        self.game = game
        self.dt = dt
        self.seed = seed
        self.stage_driven = stage_driven
        self._phi_f = _lookup(PHI_RHS, game.phi_rhs, "phi rhs")(game.phi_params, game, dt)
        self._xi_f = _lookup(XI_RHS, game.xi_rhs, "xi rhs")(game.xi_params, game, dt)
        self.policies = build_policies(game, policies, seed)
        self.hidden = build_hidden(game, seed, dt)
        self.registers = self.hidden.initial_registers()
        self._held: np.ndarray | None = None

        S, I = game.state_dim, game.base_intention_dim
        self._S, self._I = S, I
        taps = game.history_taps
        self._taps = taps
        tap_len = taps.n_taps * S if taps else 0
        self._I_full = I + tap_len
        phi0 = np.asarray(game.initial_phi, dtype=float) if game.initial_phi else np.zeros(S)
        xi0 = np.asarray(game.initial_xi, dtype=float) if game.initial_xi else np.zeros(I)
        if phi0.shape != (S,) or xi0.shape != (I,):
            raise ConfigError("initial_phi / initial_xi dimensions do not match the game")
        self._y = np.concatenate([phi0, xi0, np.tile(phi0, taps.n_taps) if taps else np.zeros(0), self.hidden.initial_ode_state()])
        self._hidden_lo = S + I + tap_len
        self._tap_lo = S + I
        self._slices = game.player_slices()
        self._coalitions = game.effective_coalitions()
        self._clock_steps = None if stage_driven else self.hidden.clocked_interval_steps()
        self._U = game.control_total
        self._trivial_coalitions = all(len(c) == 1 for c in self._coalitions) and len(
            self._coalitions
        ) == len(self._slices)
        if all(c.form == "additive" for c in game.couplings):
            self._additive_scales = np.concatenate(
                [np.full(c.eps_dim, c.scale) for c in game.couplings]
            )
        else:
            self._additive_scales = None

        n0 = capacity_hint or 1024
        self._cap = max(n0, 16)
        width = 1 + S + self._I_full + 2 * game.control_total + game.eps_total
        self._rows = np.empty((self._cap, width), dtype=float)
        self._n = 0
        self._k = 0  # completed steps
        u0 = self._controls_at(0.0)
        self.hidden.first_sample(self.registers, u0)
        self._record(0.0, u0)

    # -- layout helpers ----------------------------------------------------
    def _split(self, y):
        S, I = self._S, self._I
        return y[:S], y[S : S + I], y[self._hidden_lo :]

    def _controls_at(self, t: float) -> np.ndarray:
        if self._held is not None:
            return self._held
        return np.concatenate([p.at(t) for p in self.policies])

    def _couple(self, u_pure: np.ndarray, eps: np.ndarray) -> np.ndarray:
        if self._additive_scales is not None:
            return u_pure + self._additive_scales * eps
        u = np.empty_like(u_pure)
        lo_e = 0
        for (a, b), c in zip(self._slices, self.game.couplings):
            u[a:b] = c.apply(u_pure[a:b], eps[lo_e : lo_e + c.eps_dim])
            lo_e += c.eps_dim
        return u

    def _coalition_controls(self, u: np.ndarray) -> np.ndarray:
        coalitions = self._coalitions
        if self._trivial_coalitions:
            return u
        blocks = []
        for members in coalitions:
            a, b = self._slices[members[0]]
            acc = u[a:b].copy()
            for m in members[1:]:
                a2, b2 = self._slices[m]
                acc += u[a2:b2]
            blocks.append(acc / len(members))
        return np.concatenate(blocks)

    def _rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        phi, xi, h_ode = self._split(y)
        u_pure = self._controls_at(t)
        eps = self.hidden.eps(t, h_ode, self.registers, phi, u_pure)
        u = self._couple(u_pure, eps)
        v = self._coalition_controls(u)
        dphi = self._phi_f(t, phi, v)
        if self._taps is not None:
            oldest = y[self._tap_lo + (self._taps.n_taps - 1) * self._S : self._tap_lo + self._taps.n_taps * self._S]
            dphi = dphi + self._taps.gain * oldest
        dxi = self._xi_f(t, xi, phi, u)
        dy = np.empty_like(y)
        S, I = self._S, self._I
        dy[:S] = dphi
        dy[S : S + I] = dxi
        dy[S + I : self._hidden_lo] = 0.0
        dy[self._hidden_lo :] = self.hidden.ode_rhs(t, h_ode, phi, u_pure)
        return dy

    # -- recording ----------------------------------------------------------
    def _record(self, t: float, u_pure: np.ndarray) -> None:
        phi, xi, h_ode = self._split(self._y)
        eps = self.hidden.eps(t, h_ode, self.registers, phi, u_pure)
        u = self._couple(u_pure, eps)
        if self._n == self._cap:
            self._cap *= 2
            rows = np.empty((self._cap, self._rows.shape[1]), dtype=float)
            rows[: self._n] = self._rows[: self._n]
            self._rows = rows
        row = self._rows[self._n]
        S, I = self._S, self._I_full
        U = self._U
        row[0] = t
        row[1 : 1 + S] = phi
        row[1 + S : 1 + S + I] = self._y[S : S + I]
        row[1 + S + I : 1 + S + I + U] = u_pure
        row[1 + S + I + U : 1 + S + I + 2 * U] = u
        row[1 + S + I + 2 * U :] = eps
        self._n += 1
        if not np.isfinite(row).all():
            bad = int(np.flatnonzero(~np.isfinite(row))[0])
            self._raise_diverged(bad, t)

    def _raise_diverged(self, column: int, t: float) -> None:
        S, I = self._S, self._I_full
        U = self._U
        bounds = [
            (1, "phi"),
            (1 + S, "xi"),
            (1 + S + I, "u_pure"),
            (1 + S + I + U, "u_coupled"),
            (1 + S + I + 2 * U, "eps"),
        ]
        name = "t"
        for lo, label in bounds:
            if column >= lo:
                name = f"{label}[{column - lo}]"
        raise IntegrationDivergedError(name, t)

    # -- public stepping API -------------------------------------------------
    @property
    def t(self) -> float:
        return self._k * self.dt

    @property
    def sample_index(self) -> int:
        return self._n - 1

    @property
    def phi(self) -> np.ndarray:
        return self._y[: self._S]

    @property
    def xi(self) -> np.ndarray:
        return self._y[self._S : self._S + self._I_full]

    def last_controls(self) -> tuple[np.ndarray, np.ndarray]:
        """Pure and interactive control vectors of the latest recorded sample."""
        S, I = self._S, self._I_full
        U = self._U
        row = self._rows[self._n - 1]
        return (
            row[1 + S + I : 1 + S + I + U].copy(),
            row[1 + S + I + U : 1 + S + I + 2 * U].copy(),
        )

    def set_held_controls(self, u_concat: np.ndarray | None) -> None:
        """Freeze pure controls at a constant vector (stage engine sets)."""
        if u_concat is not None:
            u_concat = np.asarray(u_concat, dtype=float)
            if u_concat.shape != (self.game.control_total,):
                raise ConfigError("held control vector has the wrong dimension")
        self._held = u_concat

    def notify_interval_end(self, v_value: np.ndarray | None = None) -> None:
        """Stage boundary: latch hidden-register interval state."""
        self.hidden.interval_end(self.registers, v_value, self._y[self._hidden_lo :])

    def step(self) -> None:
        """One RK4 update of the joint system, then bookkeeping hooks."""
        t, dt, y = self.t, self.dt, self._y
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = self._rhs(t, y)
            k2 = self._rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
            k3 = self._rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
            k4 = self._rhs(t + dt, y + dt * k3)
            y_new = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(y_new).all():
            bad = int(np.flatnonzero(~np.isfinite(y_new))[0])
            S = self._S
            if bad < S:
                name = f"phi[{bad}]"
            elif bad < self._hidden_lo:
                name = f"xi[{bad - S}]"
            else:
                name = f"hidden[{bad - self._hidden_lo}]"
            raise IntegrationDivergedError(name, t + dt)
        self._y = y_new
        self._k += 1
        t_new = self._k * self.dt
        u0 = self._controls_at(t_new)
        self._record(t_new, u0)
        self.hidden.post_step(t_new, self.registers, u0)
        if self._taps is not None and self._k % self._taps.shift_steps == 0:
            S = self._S
            lo = self._tap_lo
            taps = self._y[lo : lo + self._taps.n_taps * S].reshape(self._taps.n_taps, S)
            taps[1:] = taps[:-1]
            taps[0] = self._y[:S]
        if self._clock_steps and self._k % self._clock_steps == 0:
            self.hidden.interval_end(self.registers, None, self._y[self._hidden_lo :])

    def run_steps(self, n: int) -> None:
        for _ in range(n):
            self.step()

    def trajectory(self) -> Trajectory:
        rows = self._rows[: self._n]
        S, I = self._S, self._I_full
        U = self._U
        return Trajectory(
            t=rows[:, 0].copy(),
            phi=rows[:, 1 : 1 + S].copy(),
            xi=rows[:, 1 + S : 1 + S + I].copy(),
            u_pure=rows[:, 1 + S + I : 1 + S + I + U].copy(),
            u_coupled=rows[:, 1 + S + I + U : 1 + S + I + 2 * U].copy(),
            dt=self.dt,
            game_name=self.game.name,
            seed=self.seed,
            player_slices=self._slices,
            _eps_truth=rows[:, 1 + S + I + 2 * U :].copy(),
        )


def step(sim: Simulator) -> None:
    """Advance a simulator by a single RK4 step."""
    sim.step()


def simulate(
    game: GameDefinition,
    horizon: float,
    dt: float,
    policies: Sequence | None = None,
    seed: int = 0,
) -> Trajectory:
    """Integrate ``game`` over ``[0, horizon]`` and return the trajectory.

    The horizon is rounded to a whole number of steps; ``horizon == dt``
    yields exactly two samples.  Identical arguments produce byte-identical
    trajectories.
    """
    if horizon <= 0:
        raise ConfigError("horizon must be positive")
    n = max(1, int(round(horizon / dt)))
    sim = Simulator(game, dt, policies=policies, seed=seed, capacity_hint=n + 1)
    sim.run_steps(n)
    return sim.trajectory()


def augment_history_feedback(game: GameDefinition, dt: float, buffer_resolution: int) -> GameDefinition:
    """Expand a delayed position feedback into intention-state components.

    The delay is realized as a shift register of ``buffer_resolution`` taps,
    each holding a snapshot of ``phi``; taps shift every
    ``delay / buffer_resolution`` time units (which must be a whole number of
    steps) and the oldest tap feeds back into the position dynamics.  The
    intention dimension grows by exactly ``state_dim * buffer_resolution``.
    A game without a delay (or with delay zero) is returned unchanged.
    """
    spec = game.delay_feedback
    if spec is None or spec.delay == 0.0:
        return game
    if buffer_resolution < 1:
        raise ConfigError("buffer_resolution must be positive")
    interval = spec.delay / buffer_resolution
    steps = interval / dt
    if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
        raise ConfigError(
            f"delay {spec.delay} is not representable with {buffer_resolution} taps at dt={dt}"
        )
    taps = HistoryTaps(n_taps=buffer_resolution, shift_steps=int(round(steps)), gain=spec.gain)
    return dataclasses.replace(
        game,
        intention_dim=game.intention_dim + game.state_dim * buffer_resolution,
        delay_feedback=None,
        history_taps=taps,
    )
