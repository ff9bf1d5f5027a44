"""The roulette layer: certify word randomness, bet on words, find resonances.

Everything operates on emitted symbol sequences.  The quasirandomness suite
certifies that the state words {omega_n} behave like a balanced memoryless
source; the resonance detector measures sustained mutual information between
the control words {v_n} and later state words; the predictive controller
turns a short-term feedback forecast into a bet on the next word.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .epsilon import EpsilonTrace, predict_epsilon_path, timescale_ratio
from .errors import ConfigError
from .util import rng_for
from .verbalize import CellPartition, WordSequence, assign_symbol


# ---------------------------------------------------------------------------
# Quasirandomness certification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuasirandomReport:
    serial_correlation: tuple[float, ...]
    chi_square: tuple[float, int]
    chi_square_p: float
    ngram_entropy_rate: tuple[float, float, float]
    serial_ok: bool
    uniform_ok: bool
    entropy_ok: bool
    overall: bool
    alphabet_size: int

    def to_json_dict(self) -> dict:
        return {
            "serial_correlation": list(self.serial_correlation),
            "chi_square": {"statistic": self.chi_square[0], "dof": self.chi_square[1]},
            "chi_square_p": self.chi_square_p,
            "ngram_entropy_rate": list(self.ngram_entropy_rate),
            "verdict": {
                "serial": self.serial_ok,
                "uniform": self.uniform_ok,
                "entropy": self.entropy_ok,
                "overall": self.overall,
            },
            "alphabet_size": self.alphabet_size,
        }


def cramers_v(x: np.ndarray, y: np.ndarray) -> float:
    """Cramer's V association between two integer sequences.

    The contingency table is built on the observed support (symbols that
    never occur contribute no rows/columns); a table with a single row or
    column has no association and returns 0.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    xs, xi = np.unique(x, return_inverse=True)
    ys, yi = np.unique(y, return_inverse=True)
    if len(xs) < 2 or len(ys) < 2:
        return 0.0
    table = np.zeros((len(xs), len(ys)), dtype=np.int64)
    np.add.at(table, (xi, yi), 1)
    chi2 = stats.chi2_contingency(table, correction=False)[0]
    n = len(x)
    return float(math.sqrt(chi2 / (n * (min(len(xs), len(ys)) - 1))))


def ngram_entropy_rate(symbols: np.ndarray, n: int) -> float:
    """Plug-in entropy of observed n-grams divided by n (bits per symbol)."""
    m = len(symbols) - n + 1
    if m < 1:
        return 0.0
    grams = np.lib.stride_tricks.sliding_window_view(symbols, n)
    _, counts = np.unique(grams, axis=0, return_counts=True)
    p = counts / m
    return float(-(p * np.log2(p)).sum() / n)


def quasirandomness_suite(
    symbols: Sequence[int], alphabet_size: int, max_lag: int = 3
) -> QuasirandomReport:
    """Three-part randomness certificate for a symbol sequence.

    Serial correlation: Cramer's V of the lag-l contingency tables must stay
    below 0.2 for l = 1..max_lag.  Uniformity: chi-square against the
    uniform distribution over the full alphabet, p > 0.01.  Entropy: plug-in
    unigram entropy at least 90% of the alphabet maximum.
    """
    symbols = np.asarray(symbols, dtype=np.int64)
    if len(symbols) < 10 * alphabet_size:
        raise ConfigError("sequence too short: need at least 10 symbols per alphabet letter")
    if symbols.min() < 0 or symbols.max() >= alphabet_size:
        raise ConfigError("symbols outside the declared alphabet")
    v_per_lag = tuple(
        cramers_v(symbols[:-lag], symbols[lag:]) for lag in range(1, max_lag + 1)
    )
    counts = np.bincount(symbols, minlength=alphabet_size)
    chi2, p = stats.chisquare(counts)
    rates = tuple(ngram_entropy_rate(symbols, n) for n in (1, 2, 3))
    serial_ok = all(v < 0.2 for v in v_per_lag)
    uniform_ok = bool(p > 0.01)
    entropy_ok = rates[0] >= 0.9 * math.log2(alphabet_size)
    return QuasirandomReport(
        serial_correlation=v_per_lag,
        chi_square=(float(chi2), alphabet_size - 1),
        chi_square_p=float(p),
        ngram_entropy_rate=rates,
        serial_ok=serial_ok,
        uniform_ok=uniform_ok,
        entropy_ok=entropy_ok,
        overall=serial_ok and uniform_ok and entropy_ok,
        alphabet_size=alphabet_size,
    )


# ---------------------------------------------------------------------------
# Mutual information and resonance detection
# ---------------------------------------------------------------------------


def plugin_mi(x: np.ndarray, y: np.ndarray) -> float:
    """Plug-in mutual information (bits) between two aligned symbol arrays."""
    n = len(x)
    if n == 0:
        return 0.0
    xs, xi = np.unique(x, return_inverse=True)
    ys, yi = np.unique(y, return_inverse=True)
    if len(xs) < 2 or len(ys) < 2:
        return 0.0
    joint = np.zeros((len(xs), len(ys)))
    np.add.at(joint, (xi, yi), 1.0)
    joint /= n
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    mask = joint > 0
    return float((joint[mask] * np.log2(joint[mask] / (px @ py)[mask])).sum())


@dataclass(frozen=True)
class ResonanceReport:
    window: int
    best_lag: int
    strength: float
    mi_per_window: tuple[float, ...]
    surrogate_null: tuple[float, float]
    p_value: float
    detected: bool
    phi_conditioned_mi: tuple[float, ...]
    phi_conditioned_null_p95: tuple[float, ...]

    @property
    def phi_conditioned_all_exceed(self) -> bool:
        if not self.phi_conditioned_mi:
            return False
        return all(
            mi > p95 for mi, p95 in zip(self.phi_conditioned_mi, self.phi_conditioned_null_p95)
        )

    def to_json_dict(self) -> dict:
        return {
            "window": self.window,
            "best_lag": self.best_lag,
            "strength": self.strength,
            "mi_per_window": list(self.mi_per_window),
            "surrogate_null": {"mean": self.surrogate_null[0], "p95": self.surrogate_null[1]},
            "p_value": self.p_value,
            "detected": self.detected,
            "phi_conditioned_mi": list(self.phi_conditioned_mi),
            "phi_conditioned_null_p95": list(self.phi_conditioned_null_p95),
            "phi_conditioned_all_exceed": self.phi_conditioned_all_exceed,
        }


def _lagged_strength(v: np.ndarray, omega: np.ndarray, window: int, max_lag: int):
    """Median windowed MI per lag; returns (best strength, best lag, window MIs)."""
    best = (-1.0, 0, ())
    for lag in range(max_lag + 1):
        vv = v[: len(v) - lag] if lag else v
        ww = omega[lag:]
        n_windows = len(vv) // window
        if n_windows == 0:
            continue
        mis = [
            plugin_mi(vv[k * window : (k + 1) * window], ww[k * window : (k + 1) * window])
            for k in range(n_windows)
        ]
        strength = float(np.median(mis))
        if strength > best[0]:
            best = (strength, lag, tuple(mis))
    return best


def detect_resonance(
    v_symbols: Sequence[int],
    omega_symbols: Sequence[int],
    phi_summary: Sequence[float] | None = None,
    window: int = 64,
    n_surrogates: int = 200,
    max_lag: int = 3,
    seed: int = 0,
) -> ResonanceReport:
    """Test for sustained dependence of state words on earlier control words.

    The statistic is the best over alignment lags 0..max_lag of the median
    plug-in MI across non-overlapping windows.  The null distribution
    re-computes the *same* statistic (including the lag scan) on
    whole-sequence shuffles of the control words, so under independence the
    observed value is exchangeable with the surrogates and the detection
    threshold (the null's 95th percentile) has a calibrated false-positive
    rate.  When a per-word position summary is given, MI is also evaluated
    within its quartile bins, each against its own surrogate null.
    """
    v = np.asarray(v_symbols, dtype=np.int64)
    omega = np.asarray(omega_symbols, dtype=np.int64)
    if len(v) != len(omega):
        raise ConfigError("control and state word sequences differ in length")
    if len(v) < window:
        raise ConfigError("need at least one full window of words")
    if n_surrogates < 200:
        raise ConfigError("need at least 200 surrogates for a stable null")
    if phi_summary is not None and len(phi_summary) != len(omega):
        raise ConfigError("position summary must align with the words")

    degenerate = len(np.unique(v)) < 2 or len(np.unique(omega)) < 2
    if degenerate:
        return ResonanceReport(
            window=window,
            best_lag=0,
            strength=0.0,
            mi_per_window=(),
            surrogate_null=(0.0, 0.0),
            p_value=1.0,
            detected=False,
            phi_conditioned_mi=(),
            phi_conditioned_null_p95=(),
        )

    strength, best_lag, mis = _lagged_strength(v, omega, window, max_lag)

    rng = rng_for(seed, "resonance.surrogates")
    permutations = [rng.permutation(len(v)) for _ in range(n_surrogates)]
    null = np.array(
        [_lagged_strength(v[perm], omega, window, max_lag)[0] for perm in permutations]
    )
    p95 = float(np.percentile(null, 95))
    p_value = float((1 + np.count_nonzero(null >= strength)) / (n_surrogates + 1))
    detected = bool(strength > p95)

    phi_mi: tuple[float, ...] = ()
    phi_null: tuple[float, ...] = ()
    if phi_summary is not None:
        phi = np.asarray(phi_summary, dtype=float)
        vv = v[: len(v) - best_lag] if best_lag else v
        ww = omega[best_lag:]
        bins = np.searchsorted(np.quantile(phi[best_lag:], [0.25, 0.5, 0.75]), phi[best_lag:])
        members = [np.flatnonzero(bins == b) for b in range(4)]
        phi_mi = tuple(plugin_mi(vv[m], ww[m]) for m in members)
        per_bin_null = np.empty((n_surrogates, 4))
        for s, perm in enumerate(permutations):
            vs = v[perm]
            vsl = vs[: len(vs) - best_lag] if best_lag else vs
            for b in range(4):
                per_bin_null[s, b] = plugin_mi(vsl[members[b]], ww[members[b]])
        phi_null = tuple(float(x) for x in np.percentile(per_bin_null, 95, axis=0))

    return ResonanceReport(
        window=window,
        best_lag=best_lag,
        strength=strength,
        mi_per_window=mis,
        surrogate_null=(float(null.mean()), p95),
        p_value=p_value,
        detected=detected,
        phi_conditioned_mi=phi_mi,
        phi_conditioned_null_p95=phi_null,
    )


# ---------------------------------------------------------------------------
# Predictive controller
# ---------------------------------------------------------------------------


def predict_next_word(
    history: WordSequence,
    trace: EpsilonTrace,
    partition: CellPartition,
    order: int = 8,
    fit_window: int = 512,
) -> tuple[int, float]:
    """Bet on the next state word from a short-term feedback forecast.

    The feedback trace is extrapolated one median set duration ahead; the
    forecast samples are averaged and quantized to the symbol alphabet.
    Confidence is the fraction of forecast samples that land in the modal
    forecast cell.  When the applicability condition fails (the feedback
    moves faster than the sets change), confidence is clamped to chance
    level so the caller cannot mistake the forecast for signal.
    """
    if len(history) < 3:
        raise ConfigError("insufficient history: need at least 3 sets")
    steps = max(1, int(round(history.median_set_duration() / trace.dt)))
    path, _ = predict_epsilon_path(trace, steps, p=order, fit_window=fit_window)
    symbol = assign_symbol(path.mean(axis=0), partition)
    sample_symbols = np.array([assign_symbol(row, partition) for row in path])
    _, counts = np.unique(sample_symbols, return_counts=True)
    confidence = float(counts.max() / len(sample_symbols))
    # Applicability is a property of how the feedback moves *now*, so judge
    # it on a recent stretch of the trace rather than the whole history;
    # this also keeps the per-bet cost independent of the match length.
    tail = max(fit_window, 16 * steps)
    recent = trace if trace.n_samples <= tail else EpsilonTrace(
        t=trace.t[-tail:],
        eps=trace.eps[-tail:],
        dt=trace.dt,
        player_slices=trace.player_slices,
        provenance=trace.provenance,
    )
    if timescale_ratio(recent, history) >= 1.0:
        confidence = min(confidence, 1.0 / history.alphabet_size)
    return symbol, confidence


# ---------------------------------------------------------------------------
# Betting ledger
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BetEntry:
    set_index: int
    predicted: int
    actual: int
    stake: float
    payoff: float


class BetLedger:
    """Roulette accounting: one entry per settled set, running balance.

    A hit on a single-symbol bet pays ``stake * (alphabet_size - 1)``; a
    miss forfeits the stake.  With a uniform target the game is exactly
    fair in expectation.
    """

    def __init__(self, alphabet_size: int):
        if alphabet_size < 2:
            raise ConfigError("a bet needs at least two possible symbols")
        self.alphabet_size = alphabet_size
        self._entries: list[BetEntry] = []
        self._used: set[int] = set()
        self._balance = 0.0
        self._hits = 0

    @property
    def entries(self) -> tuple[BetEntry, ...]:
        return tuple(self._entries)

    @property
    def balance(self) -> float:
        return self._balance

    @property
    def hits(self) -> int:
        return self._hits

    def __len__(self) -> int:
        return len(self._entries)

    def hit_rate(self) -> float:
        if not self._entries:
            return 0.0
        return self._hits / len(self._entries)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("set,predicted,actual,stake,payoff,balance\n")
            balance = 0.0
            for e in self._entries:
                balance += e.payoff
                fh.write(
                    f"{e.set_index},{e.predicted},{e.actual},{e.stake!r},{e.payoff!r},{balance!r}\n"
                )


def read_ledger_csv(path, alphabet_size: int) -> BetLedger:
    """Rebuild a ledger from its CSV export, verifying the settlement math.

    Each row is replayed through ``settle_bet``; the recorded payoff and
    running balance must match the recomputation exactly, so a tampered or
    truncated export is rejected rather than silently accepted.
    """
    ledger = BetLedger(alphabet_size=alphabet_size)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "set,predicted,actual,stake,payoff,balance":
            raise ConfigError(f"unexpected ledger CSV header: {header!r}")
        for line in fh:
            idx, pred, act, stake, payoff, balance = line.strip().split(",")
            settle_bet(ledger, int(idx), int(pred), int(act), float(stake))
            entry = ledger.entries[-1]
            if entry.payoff != float(payoff) or ledger.balance != float(balance):
                raise ConfigError(f"ledger row for set {idx} is inconsistent")
    return ledger


def settle_bet(
    ledger: BetLedger, set_index: int, predicted: int, actual: int, stake: float
) -> BetLedger:
    """Append one settled bet; rejects reuse of a set index."""
    if stake <= 0:
        raise ConfigError("stake must be positive")
    if set_index in ledger._used:
        raise ConfigError(f"set {set_index} already settled")
    payoff = stake * (ledger.alphabet_size - 1) if predicted == actual else -stake
    ledger._entries.append(
        BetEntry(set_index=set_index, predicted=predicted, actual=actual, stake=stake, payoff=payoff)
    )
    ledger._used.add(set_index)
    ledger._balance += payoff
    if predicted == actual:
        ledger._hits += 1
    return ledger


@dataclass(frozen=True)
class BacktestResult:
    ledger: BetLedger
    n_bets: int
    hit_rate: float
    chance_rate: float
    p_value_beats_chance: float
    mean_confidence: float

    def to_json_dict(self) -> dict:
        return {
            "n_bets": self.n_bets,
            "hit_rate": self.hit_rate,
            "chance_rate": self.chance_rate,
            "p_value_beats_chance": self.p_value_beats_chance,
            "mean_confidence": self.mean_confidence,
            "balance": self.ledger.balance,
        }


def backtest_bot(
    trace: EpsilonTrace,
    words: WordSequence,
    partition: CellPartition,
    start_set: int = 8,
    stake: float = 1.0,
    order: int = 8,
    fit_window: int = 512,
) -> BacktestResult:
    """Walk-forward evaluation of the predictive controller.

    At the end of every set ``n`` (from ``start_set`` on) the bot sees only
    the trace up to that moment and the words so far, predicts the symbol of
    set ``n+1``, and settles against the realized word.  The resulting hit
    rate is compared against uniform chance with a one-sided binomial test.
    """
    ledger = BetLedger(alphabet_size=words.alphabet_size)
    confidences = []
    predictions = []
    for n in range(start_set, len(words) - 1):
        end_index = int(round(words.words[n].t_end / trace.dt))
        if end_index + 1 < fit_window:
            continue
        head = EpsilonTrace(
            t=trace.t[: end_index + 1],
            eps=trace.eps[: end_index + 1],
            dt=trace.dt,
            player_slices=trace.player_slices,
            provenance=trace.provenance,
        )
        history = WordSequence(
            words=words.words[: n + 1],
            alphabet_size=words.alphabet_size,
            control_alphabet_size=words.control_alphabet_size,
            partition=words.partition,
        )
        symbol, confidence = predict_next_word(
            history, head, partition, order=order, fit_window=fit_window
        )
        actual = words.words[n + 1].omega_symbol
        ledger = settle_bet(ledger, n + 1, symbol, actual, stake)
        confidences.append(confidence)
        predictions.append(symbol)
    n_bets = len(ledger)
    if n_bets == 0:
        raise ConfigError("backtest produced no bets; run more sets")
    chance = 1.0 / words.alphabet_size
    test = stats.binomtest(ledger.hits, n_bets, chance, alternative="greater")
    return BacktestResult(
        ledger=ledger,
        n_bets=n_bets,
        hit_rate=ledger.hit_rate(),
        chance_rate=chance,
        p_value_beats_chance=float(test.pvalue),
        mean_confidence=float(np.mean(confidences)),
    )
