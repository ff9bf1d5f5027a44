"""Turn-based HTTP session service.

Each session wraps one seeded match engine.  A turn is: the client submits an
action (a bet on the next state word and a control vector to hold), then asks
the engine to advance one set.  The snapshot returned after every call shows
only what a player at the table could see: set index, phase, the symbol
history, the balance, a live resonance indicator, and the control bounds.
The recovered feedback values and the hidden layer never cross this boundary.

Concurrency: a registry lock guards session creation/lookup and each session
carries its own lock, so requests against one session serialize and an
advance is atomic — no snapshot can observe a half-played set.

Error responses all share one shape: ``{"code", "field"?, "message"}``.
Codes: ``invalid-request`` (malformed body), ``invalid-config`` (bad session
config), ``unknown-session``, ``invalid-action`` (bad bet or control, with
``field`` naming the culprit), ``wrong-phase`` (action or advance in a phase
that forbids it), ``runtime-failure`` (the engine failed mid-set).
"""
from __future__ import annotations

import json
import threading
import uuid

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import ScenarioConfig, config_from_dict
from .errors import ConfigError, KrouletteError
from .roulette import BetLedger, plugin_mi, settle_bet
from .scenarios import scenario_bundle
from .stages import MatchEngine
from .util import rng_for

PHASE_AWAITING = "awaiting-action"
PHASE_ADVANCING = "advancing"
PHASE_FINISHED = "finished"

#: shuffles behind the live indicator's threshold (lighter than the offline
#: detector's null because it runs on every advance)
INDICATOR_SURROGATES = 100


class ApiError(KrouletteError):
    """Carries the documented error-body fields plus an HTTP status."""

    def __init__(self, code: str, message: str, status: int, field: str | None = None):
        super().__init__(message)
        self.code = code
        self.field = field
        self.status = status

    def body(self) -> dict:
        payload = {"code": self.code, "message": str(self)}
        if self.field is not None:
            payload["field"] = self.field
        return payload


def _indicator(v_symbols, omega_symbols, window: int, max_lag: int, seed: int) -> dict:
    """Plug-in MI of the newest full window vs a shuffle-null threshold.

    The statistic is the best over alignment lags 0..max_lag of the MI
    between the latest ``window`` control words and the state words they
    align with.  The threshold is the 95th percentile of the same statistic
    under within-window shuffles of the control words, drawn from a stream
    keyed by the word count so equal-seed sessions agree exactly.
    """
    v = np.asarray(v_symbols, dtype=np.int64)
    w = np.asarray(omega_symbols, dtype=np.int64)
    n = len(w)
    if n < window:
        return {"mi": None, "threshold": None, "detected": False}

    lags = range(min(max_lag, n - window) + 1)

    def stat(control: np.ndarray) -> float:
        best = 0.0
        for lag in lags:
            vv = control[n - window - lag : n - lag]
            ww = w[n - window : n]
            best = max(best, plugin_mi(vv, ww))
        return best

    mi = stat(v)
    rng = rng_for(seed, f"session.indicator.{n}")
    lo = n - window - max(lags)
    null = np.empty(INDICATOR_SURROGATES)
    for s in range(INDICATOR_SURROGATES):
        shuffled = v.copy()
        shuffled[lo:] = v[lo:][rng.permutation(n - lo)]
        null[s] = stat(shuffled)
    threshold = float(np.percentile(null, 95))
    return {"mi": mi, "threshold": threshold, "detected": bool(mi > threshold)}


class Session:
    """One live match plus the table state around it."""

    def __init__(self, config: ScenarioConfig):
        self.id = uuid.uuid4().hex
        self.config = config
        self.lock = threading.Lock()
        bundle = scenario_bundle(config)
        steps_hint = int(config.n_sets * (0.5 * bundle.clock_period) / config.dt) + config.n_sets
        self.engine = MatchEngine(
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
        slices = bundle.game.player_slices()
        self.human_slice = slices[-1]
        self.ledger = BetLedger(alphabet_size=config.alphabet_size)
        self.pending_bet: tuple[int, float] | None = None
        self.pending_control: np.ndarray | None = None
        self.phase = PHASE_AWAITING
        self.resonance = {"mi": None, "threshold": None, "detected": False}

    # -- views ---------------------------------------------------------------
    def snapshot(self) -> dict:
        return {
            "set_index": len(self.engine.records),
            "phase": self.phase,
            "words": [
                {"n": w.n, "omega_symbol": w.omega_symbol, "v_symbol": w.v_symbol}
                for w in self.engine.words
            ],
            "balance": self.ledger.balance,
            "resonance": dict(self.resonance),
            "bounds": {
                "control_min": self.config.control_min,
                "control_max": self.config.control_max,
            },
            "alphabet_size": self.config.alphabet_size,
        }

    # -- turn handling ---------------------------------------------------------
    def submit_action(self, payload: dict) -> None:
        if self.phase != PHASE_AWAITING:
            raise ApiError("wrong-phase", f"cannot act while {self.phase}", 409)
        if not isinstance(payload, dict):
            raise ApiError("invalid-request", "action body must be a JSON object", 400)
        unknown = sorted(set(payload) - {"bet", "control"})
        if unknown:
            raise ApiError(
                "invalid-action", f"unknown action field {unknown[0]!r}", 400, field=unknown[0]
            )
        bet = self._parse_bet(payload.get("bet"))
        control = self._parse_control(payload.get("control"))
        # last write wins: the newest submission replaces both parts
        self.pending_bet = bet
        self.pending_control = control

    def _parse_bet(self, bet) -> tuple[int, float] | None:
        if bet is None:
            return None
        if not isinstance(bet, dict):
            raise ApiError("invalid-action", "bet must be an object", 400, field="bet")
        try:
            symbol = int(bet["symbol"])
            stake = float(bet["stake"])
        except (KeyError, TypeError, ValueError):
            raise ApiError(
                "invalid-action", "bet needs integer symbol and numeric stake", 400, field="bet"
            ) from None
        if not 0 <= symbol < self.config.alphabet_size:
            raise ApiError(
                "invalid-action",
                f"symbol must be in [0, {self.config.alphabet_size})",
                400,
                field="bet.symbol",
            )
        if not np.isfinite(stake) or stake < 0:
            raise ApiError(
                "invalid-action", "stake must be a finite non-negative number", 400,
                field="bet.stake",
            )
        if stake > self.ledger.balance + self.config.credit_limit:
            raise ApiError(
                "invalid-action",
                f"stake {stake:g} exceeds balance plus credit limit",
                400,
                field="bet.stake",
            )
        return (symbol, stake)

    def _parse_control(self, control) -> np.ndarray | None:
        if control is None:
            return None
        dim = self.human_slice[1] - self.human_slice[0]
        try:
            values = np.asarray([float(x) for x in control], dtype=float)
        except (TypeError, ValueError):
            raise ApiError(
                "invalid-action", "control must be a list of numbers", 400, field="control"
            ) from None
        if values.shape != (dim,):
            raise ApiError(
                "invalid-action", f"control must have {dim} components", 400, field="control"
            )
        lo, hi = self.config.control_min, self.config.control_max
        if not np.all(np.isfinite(values)) or np.any(values < lo) or np.any(values > hi):
            raise ApiError(
                "invalid-action",
                f"control components must lie in [{lo:g}, {hi:g}]",
                400,
                field="control",
            )
        return values

    def advance(self) -> None:
        if self.phase == PHASE_FINISHED:
            raise ApiError("wrong-phase", "the match is finished", 409)
        index = len(self.engine.records)
        self.phase = PHASE_ADVANCING
        try:
            hold = self.engine.hold_vector_for_set(index, self.engine.sim.t)
            if self.pending_control is not None:
                hold[self.human_slice[0] : self.human_slice[1]] = self.pending_control
            else:
                hold[self.human_slice[0] : self.human_slice[1]] = 0.0
            self.engine.run_set(held_controls=hold)
        except KrouletteError as exc:
            self.phase = PHASE_FINISHED
            raise ApiError("runtime-failure", str(exc), 500) from exc
        word = self.engine.words[-1]
        if self.pending_bet is not None and self.pending_bet[1] > 0:
            symbol, stake = self.pending_bet
            settle_bet(self.ledger, index, symbol, word.omega_symbol, stake)
        self.pending_bet = None
        self.pending_control = None
        seq = self.engine.word_sequence()
        self.resonance = _indicator(
            seq.v_symbols,
            seq.omega_symbols,
            self.config.window,
            self.config.max_lag,
            self.config.seed,
        )
        self.phase = (
            PHASE_FINISHED if len(self.engine.records) >= self.config.n_sets else PHASE_AWAITING
        )


def create_app(default_config: ScenarioConfig | None = None) -> FastAPI:
    """Build the FastAPI app; sessions live for the app's lifetime."""
    app = FastAPI(title="kroulette session service", docs_url=None, redoc_url=None)
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    async def _json_body(request: Request) -> dict:
        raw = await request.body()
        if not raw:
            return {}
        try:
            payload = json.loads(raw)
        except ValueError as exc:
            raise ApiError("invalid-request", f"body is not valid JSON: {exc}", 400) from None
        if not isinstance(payload, dict):
            raise ApiError("invalid-request", "body must be a JSON object", 400)
        return payload

    def _session(sid: str) -> Session:
        with registry_lock:
            session = sessions.get(sid)
        if session is None:
            raise ApiError("unknown-session", f"no session with id {sid!r}", 404)
        return session

    @app.post("/session")
    async def create_session(request: Request):
        payload = await _json_body(request)
        try:
            if payload:
                config = config_from_dict(payload)
            elif default_config is not None:
                config = default_config
            else:
                config = ScenarioConfig()
            session = Session(config)
        except ApiError:
            raise
        except ConfigError as exc:
            raise ApiError("invalid-config", str(exc), 400) from exc
        with registry_lock:
            sessions[session.id] = session
        with session.lock:
            return {"id": session.id, "snapshot": session.snapshot()}

    @app.get("/session/{sid}/snapshot")
    async def get_snapshot(sid: str):
        session = _session(sid)
        with session.lock:
            return session.snapshot()

    @app.post("/session/{sid}/action")
    async def post_action(sid: str, request: Request):
        session = _session(sid)
        payload = await _json_body(request)
        with session.lock:
            session.submit_action(payload)
            return session.snapshot()

    @app.post("/session/{sid}/advance")
    async def post_advance(sid: str):
        session = _session(sid)
        with session.lock:
            session.advance()
            return session.snapshot()

    return app
