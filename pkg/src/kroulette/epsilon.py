"""Recovery and analysis of the hidden feedback channels.

Everything here works from observables only: the pure and interactive
controls recorded in a :class:`~kroulette.dynamics.Trajectory`.  Recovery
inverts the declared coupling per sample; the downstream tools (integral
checks, short-term forecasting, the control-applicability ratio) consume the
recovered traces and never look at the simulator's hidden state.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .dynamics import CouplingSpec, Trajectory
from .errors import ConfigError, NonInvertibleCouplingError

GAIN_SINGULARITY = 1e-12


@dataclass(frozen=True)
class EpsilonTrace:
    """Per-sample feedback estimates aligned with a trajectory's grid.

    ``eps`` concatenates per-player blocks (``player_slices`` gives the
    bounds).  ``provenance`` distinguishes recovered traces from
    ground-truth oracles; the latter may only be constructed in test code.
    """

    t: np.ndarray
    eps: np.ndarray
    dt: float
    player_slices: tuple[tuple[int, int], ...]
    provenance: str = "recovered"

    def __post_init__(self):
        if self.provenance not in ("recovered", "ground-truth-oracle"):
            raise ConfigError(f"unknown provenance {self.provenance!r}")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if len(self.t) != len(self.eps):
            raise ConfigError("time grid and eps rows must align")

    @property
    def n_samples(self) -> int:
        return len(self.t)

    def write_csv(self, path) -> None:
        names = []
        for p, (a, b) in enumerate(self.player_slices):
            names.extend(f"eps_{p + 1}_{c + 1}" for c in range(b - a))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(["t"] + names) + "\n")
            for ti, row in zip(self.t, self.eps):
                fh.write(",".join(repr(float(x)) for x in [ti, *row]) + "\n")


def read_epsilon_csv(path) -> EpsilonTrace:
    """Rebuild a recovered trace from its CSV export."""
    from .dynamics import _read_csv, _slices_from_names

    header, body = _read_csv(path)
    if not header or header[0] != "t" or len(header) < 2:
        raise ConfigError(f"unexpected eps CSV header: {header[:3]}")
    slices = _slices_from_names(header[1:], "eps")
    t = body[:, 0]
    dt = float(t[1] - t[0]) if len(t) > 1 else 1.0
    return EpsilonTrace(t=t, eps=body[:, 1:], dt=dt, player_slices=slices)


def invert_coupling_sample(
    couplings: Sequence[CouplingSpec],
    slices: Sequence[tuple[int, int]],
    u_pure: np.ndarray,
    u_coupled: np.ndarray,
    sample_index: int = 0,
) -> np.ndarray:
    """Recover the concatenated eps vector of a single sample."""
    eps = np.empty(sum(c.eps_dim for c in couplings))
    lo_e = 0
    for (a, b), c in zip(slices, couplings):
        up = u_pure[a:b]
        uc = u_coupled[a:b]
        block = eps[lo_e : lo_e + c.eps_dim]
        if c.form == "additive":
            block[:] = (uc - up) / c.scale
        else:
            block[:] = uc - up
            for axis in c.gain_axes:
                if abs(up[axis]) < GAIN_SINGULARITY:
                    raise NonInvertibleCouplingError(
                        sample_index,
                        f"gain component {axis}: pure control is zero, eps undetermined",
                    )
                gain = uc[axis] / up[axis]
                if abs(gain) < GAIN_SINGULARITY:
                    raise NonInvertibleCouplingError(
                        sample_index,
                        f"gain component {axis}: singular gain |1+eps| < {GAIN_SINGULARITY}",
                    )
                block[axis] = gain - 1.0
        lo_e += c.eps_dim
    return eps


def recover_epsilon(traj: Trajectory, couplings: Sequence[CouplingSpec]) -> EpsilonTrace:
    """Invert the couplings sample by sample: solve ``u = couple(u_pure, eps)``.

    Additive blocks invert as ``eps = (u - u_pure) / scale``.  Affine-gain
    blocks invert bias components by subtraction and gain components by
    division; a gain factor within ``1e-12`` of zero (equivalently
    ``|1 + eps| < 1e-12``, where the product no longer determines ``eps``)
    raises a non-invertible-coupling error carrying the sample index.
    """
    slices = traj.player_slices
    if len(couplings) != len(slices):
        raise ConfigError("need exactly one coupling per player block")
    n = traj.n_samples
    eps = np.empty((n, sum(c.eps_dim for c in couplings)))
    lo_e = 0
    for (a, b), c in zip(slices, couplings):
        if b - a != c.control_dim:
            raise ConfigError("coupling dimension does not match the trajectory block")
        up = traj.u_pure[:, a:b]
        uc = traj.u_coupled[:, a:b]
        block = eps[:, lo_e : lo_e + c.eps_dim]
        if c.form == "additive":
            block[:] = (uc - up) / c.scale
        else:
            block[:] = uc - up
            for axis in c.gain_axes:
                denom = up[:, axis]
                ratio = uc[:, axis]
                bad = np.flatnonzero(np.abs(denom) < GAIN_SINGULARITY)
                if bad.size:
                    raise NonInvertibleCouplingError(
                        int(bad[0]),
                        f"gain component {axis}: pure control is zero, eps undetermined",
                    )
                gain = ratio / denom
                bad = np.flatnonzero(np.abs(gain) < GAIN_SINGULARITY)
                if bad.size:
                    raise NonInvertibleCouplingError(
                        int(bad[0]), f"gain component {axis}: singular gain |1+eps| < {GAIN_SINGULARITY}"
                    )
                block[:, axis] = gain - 1.0
        lo_e += c.eps_dim
    return EpsilonTrace(
        t=traj.t.copy(), eps=eps, dt=traj.dt, player_slices=slices, provenance="recovered"
    )


def reapply_coupling(traj: Trajectory, couplings: Sequence[CouplingSpec], trace: EpsilonTrace) -> np.ndarray:
    """Push an eps trace back through the couplings (round-trip check)."""
    out = np.empty_like(traj.u_pure)
    lo_e = 0
    for (a, b), c in zip(traj.player_slices, couplings):
        for k in range(traj.n_samples):
            out[k, a:b] = c.apply(traj.u_pure[k, a:b].copy(), trace.eps[k, lo_e : lo_e + c.eps_dim])
        lo_e += c.eps_dim
    return out


# ---------------------------------------------------------------------------
# Correlation-integral checks
# ---------------------------------------------------------------------------

#: functional factories ``(params) -> f(list of eps arrays) -> (n, k) array``
FUNCTIONALS: dict[str, Callable] = {}


def _functional_zero(params):
    def f(traces):
        return np.zeros((len(traces[0]), 1))

    return f


def _functional_lin_comb(params):
    coeffs = [float(x) for x in params.get("coefficients", ())]
    if not coeffs:
        raise ConfigError("lin-comb functional needs coefficients")

    def f(traces):
        if len(coeffs) != len(traces):
            raise ConfigError("lin-comb needs one coefficient per trace")
        acc = coeffs[0] * traces[0]
        for c, tr in zip(coeffs[1:], traces[1:]):
            acc = acc + c * tr
        return acc

    return f


def _functional_norm_difference(params):
    def f(traces):
        if len(traces) < 2:
            raise ConfigError("norm-difference needs two traces")
        d = np.linalg.norm(traces[0] - traces[1], axis=1)
        return d[:, None]

    return f


FUNCTIONALS["zero"] = _functional_zero
FUNCTIONALS["lin-comb"] = _functional_lin_comb
FUNCTIONALS["norm-difference"] = _functional_norm_difference


@dataclass(frozen=True)
class IntegralReport:
    """Time-(in)dependence verdict for one functional over a run."""

    functional: str
    mean: tuple[float, ...]
    max_abs_deviation: float
    integral: bool
    tol: float


def check_correlation_integrals(
    traces: Sequence[EpsilonTrace],
    functionals: Sequence[str | tuple[str, Mapping]],
    tol: float = 1e-6,
) -> list[IntegralReport]:
    """Evaluate functionals of simultaneous feedback traces over time.

    A functional is flagged ``integral`` when it stays within ``tol`` of its
    own time mean across the whole run, i.e. it is (numerically) a conserved
    relation between the representations.  Functionals see only the eps
    values, never the time stamps, so the report is invariant under shifting
    all times by a constant.
    """
    if len(traces) < 1:
        raise ConfigError("need at least one trace")
    n = traces[0].n_samples
    if any(tr.n_samples != n for tr in traces):
        raise ConfigError("traces must have equal length")
    if any(abs(tr.dt - traces[0].dt) > 1e-12 for tr in traces):
        raise ConfigError("traces must share the sampling step")
    arrays = [np.asarray(tr.eps, dtype=float) for tr in traces]
    reports = []
    for spec in functionals:
        if isinstance(spec, str):
            kind, params = spec, {}
        else:
            kind, params = spec
        try:
            factory = FUNCTIONALS[kind]
        except KeyError:
            known = ", ".join(sorted(FUNCTIONALS))
            raise ConfigError(f"unknown functional id {kind!r}; registered ids: {known}") from None
        values = np.atleast_2d(factory(params)(arrays))
        mean = values.mean(axis=0)
        deviation = float(np.max(np.abs(values - mean))) if values.size else 0.0
        reports.append(
            IntegralReport(
                functional=kind,
                mean=tuple(float(m) for m in mean),
                max_abs_deviation=deviation,
                integral=deviation < tol,
                tol=tol,
            )
        )
    return reports


# ---------------------------------------------------------------------------
# Short-term prediction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PredictionModel:
    """Least-squares autoregressive extrapolator fitted per component.

    ``coefficients[j]`` holds the AR taps of component ``j`` (most recent
    sample first, no intercept).  Components whose fit matrix was rank
    deficient fall back to a persistence forecast and are flagged in
    ``fallback``.
    """

    order: int
    fit_window: int
    coefficients: tuple[tuple[float, ...], ...]
    fallback: tuple[bool, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "order": self.order,
                "window": self.fit_window,
                "coefficients": [list(row) for row in self.coefficients],
                "fallback": list(self.fallback),
            },
            indent=2,
        )


def _fit_ar(x: np.ndarray, p: int) -> tuple[np.ndarray, bool]:
    """Fit x_k ~ sum_i a_i x_{k-i} by least squares. Returns (taps, fell_back).

    The minimum-norm solution is used when several tap vectors fit equally
    well (a smooth signal occupying fewer than ``p`` modes): it still
    reproduces the signal's own recurrence exactly.  Only a degenerate fit
    matrix -- rank below 2, i.e. a constant or empty window with no usable
    dynamics -- triggers the persistence fallback.
    """
    n = len(x)
    rows = n - p
    design = np.empty((rows, p))
    for i in range(p):
        design[:, i] = x[p - 1 - i : n - 1 - i]
    target = x[p:]
    coeffs, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < min(2, p) or not np.all(np.isfinite(coeffs)):
        taps = np.zeros(p)
        taps[0] = 1.0
        return taps, True
    return coeffs, False


def predict_epsilon(
    trace: EpsilonTrace,
    delta_t: float,
    p: int = 8,
    fit_window: int = 512,
) -> tuple[np.ndarray, PredictionModel]:
    """Forecast the trace ``delta_t`` beyond its last sample.

    Fits an order-``p`` autoregression per component on the last
    ``fit_window`` samples and iterates it ``delta_t / dt`` steps forward.
    ``delta_t`` must be a whole number of steps; zero returns the final
    sample unchanged.  Rank-deficient components (such as a constant
    history) use a persistence forecast and are flagged in the model.
    """
    if p < 1:
        raise ConfigError("prediction order must be positive")
    if fit_window <= p:
        raise ConfigError("fit_window must exceed the order")
    if trace.n_samples < fit_window:
        raise ConfigError("trace shorter than the fit window")
    if delta_t < 0:
        raise ConfigError("delta_t must be nonnegative")
    steps = delta_t / trace.dt
    if abs(steps - round(steps)) > 1e-9:
        raise ConfigError("delta_t must be a whole number of sampling steps")
    steps = int(round(steps))

    window = trace.eps[-fit_window:]
    E = window.shape[1]
    taps = []
    fell = []
    for j in range(E):
        c, fb = _fit_ar(window[:, j], p)
        taps.append(tuple(float(v) for v in c))
        fell.append(fb)
    model = PredictionModel(
        order=p, fit_window=fit_window, coefficients=tuple(taps), fallback=tuple(fell)
    )
    if steps == 0:
        return window[-1].copy(), model

    forecast = np.empty(E)
    for j in range(E):
        if fell[j]:
            forecast[j] = window[-1, j]
            continue
        lags = list(window[-p:, j][::-1])  # lags[0] = most recent
        c = np.asarray(taps[j])
        for _ in range(steps):
            nxt = float(c @ lags)
            lags = [nxt] + lags[:-1]
        forecast[j] = lags[0]
    return forecast, model


def predict_epsilon_path(
    trace: EpsilonTrace, steps: int, p: int = 8, fit_window: int = 512
) -> tuple[np.ndarray, PredictionModel]:
    """Iterated forecast returning every intermediate step (``steps`` rows)."""
    if steps < 1:
        raise ConfigError("steps must be positive")
    _, model = predict_epsilon(trace, 0.0, p=p, fit_window=fit_window)
    window = trace.eps[-fit_window:]
    E = window.shape[1]
    path = np.empty((steps, E))
    for j in range(E):
        if model.fallback[j]:
            path[:, j] = window[-1, j]
            continue
        lags = list(window[-p:, j][::-1])
        c = np.asarray(model.coefficients[j])
        for s in range(steps):
            nxt = float(c @ lags)
            lags = [nxt] + lags[:-1]
            path[s, j] = nxt
    return path, model


# ---------------------------------------------------------------------------
# Applicability ratio
# ---------------------------------------------------------------------------


def variation_timescale(trace: EpsilonTrace, max_lag: int | None = None) -> float:
    """First lag (in time units) where the autocorrelation drops below 1/e.

    Components are combined into a single correlation curve weighted by
    their variance, so high-amplitude slow channels dominate, matching how
    much of the signal energy actually moves at each timescale.  A constant
    trace has no variation: the timescale is infinite.  If the curve never
    crosses 1/e within the available lags the last examined lag is returned
    as a lower bound.
    """
    x = trace.eps - trace.eps.mean(axis=0)
    n = len(x)
    if n < 3:
        raise ConfigError("trace too short for an autocorrelation estimate")
    var = (x * x).mean(axis=0)
    total = var.sum()
    if total < 1e-24:
        return math.inf
    weights = var / total
    L = max_lag if max_lag is not None else n - 2
    L = min(L, n - 2)
    threshold = 1.0 / math.e
    for lag in range(1, L + 1):
        num = (x[:-lag] * x[lag:]).mean(axis=0)
        rho = float((weights * (num / np.maximum(var, 1e-24))).sum())
        if rho < threshold:
            return lag * trace.dt
    return L * trace.dt


def timescale_ratio(trace: EpsilonTrace, words) -> float:
    """Median set duration divided by the feedback variation timescale.

    The short-term controller is applicable when the hidden feedback moves
    slower than the sets change, i.e. when the ratio is below one.  ``words``
    is any word sequence exposing per-word ``t_start``/``t_end``.
    """
    items = list(getattr(words, "words", words))
    if len(items) < 3:
        raise ConfigError("need at least three sets to estimate their duration")
    durations = np.array([w.t_end - w.t_start for w in items], dtype=float)
    median_set = float(np.median(durations))
    # searching far beyond a few set lengths is pointless: the ratio is
    # already well below one by then
    max_lag = int(min(trace.n_samples - 2, math.ceil(4 * median_set / trace.dt)))
    scale = variation_timescale(trace, max_lag=max_lag)
    if math.isinf(scale):
        return 0.0
    return median_set / scale
