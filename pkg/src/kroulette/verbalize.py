"""Coarse-graining of feedback space into cells, transitions, and words.

The hidden dialogue of a run is produced in three steps:

1. a rectangular partition of feedback space assigns every sample a cell;
2. the moments where the cell changes split time into intervals;
3. each interval is summarized into a word: the time average of the
   feedback channels (``omega``) and of the pure controls (``v``), each
   quantized to a symbol.

The partition carries up to three axis-aligned grids.  The *transition*
grid decides when intervals end.  The *symbol* grid quantizes interval
averages of the feedback into the word alphabet, and the *control* grid
quantizes control averages.  Keeping the symbol grid independent of the
transition grid matters: an interval's average always lies inside the cell
the trace occupied (cells are convex), so symbols read off the transition
grid could never repeat consecutively, which would imprint a strong serial
correlation on the word stream.  Quantizing along axes the transition grid
does not cut removes that artifact.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .dynamics import Trajectory
from .epsilon import EpsilonTrace
from .errors import ConfigError


@dataclass(frozen=True)
class CellPartition:
    """Axis-aligned rectangular partition with optional hysteresis.

    ``cuts[j]`` are the strictly increasing cut points along feedback axis
    ``j`` of the transition grid (an empty tuple leaves the axis uncut).
    ``symbol_cuts`` plays the same role for the word alphabet and defaults
    to the transition grid; ``control_cuts`` quantizes pure-control
    averages.  Points exactly on a cut belong to the lower cell.  With a
    positive ``hysteresis`` margin, a sample keeps its previous cell while
    it stays within that margin of the previous cell's interval.
    """

    cuts: tuple[tuple[float, ...], ...]
    hysteresis: float = 0.0
    symbol_cuts: tuple[tuple[float, ...], ...] | None = None
    control_cuts: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.hysteresis < 0:
            raise ConfigError("hysteresis must be nonnegative")
        for grid_name, grid in (
            ("cuts", self.cuts),
            ("symbol_cuts", self.symbol_cuts),
            ("control_cuts", self.control_cuts),
        ):
            if grid is None:
                continue
            for axis in grid:
                arr = list(axis)
                if any(b <= a for a, b in zip(arr, arr[1:])):
                    raise ConfigError(f"{grid_name} must be strictly increasing per axis")

    # -- grid arithmetic ----------------------------------------------------
    @staticmethod
    def _grid_cells(grid) -> int:
        n = 1
        for axis in grid:
            n *= len(axis) + 1
        return n

    @property
    def n_cells(self) -> int:
        return self._grid_cells(self.cuts)

    @property
    def alphabet_size(self) -> int:
        return self._grid_cells(self.symbol_cuts if self.symbol_cuts is not None else self.cuts)

    @property
    def control_alphabet_size(self) -> int:
        if self.control_cuts is None:
            return 1
        return self._grid_cells(self.control_cuts)

    def describe(self) -> dict:
        return {
            "cuts": [list(a) for a in self.cuts],
            "hysteresis": self.hysteresis,
            "symbol_cuts": None
            if self.symbol_cuts is None
            else [list(a) for a in self.symbol_cuts],
            "control_cuts": None
            if self.control_cuts is None
            else [list(a) for a in self.control_cuts],
            "alphabet_size": self.alphabet_size,
            "control_alphabet_size": self.control_alphabet_size,
        }


def _axis_bin(cuts: Sequence[float], x: float) -> int:
    """Index of the interval containing x; points on a cut go to the lower cell."""
    lo, hi = 0, len(cuts)
    while lo < hi:
        mid = (lo + hi) // 2
        if cuts[mid] >= x:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _cell_id(bins: Sequence[int], grid) -> int:
    cell = 0
    for b, axis in zip(bins, grid):
        cell = cell * (len(axis) + 1) + b
    return cell


def _cell_bins(cell: int, grid) -> list[int]:
    bins = [0] * len(grid)
    for j in range(len(grid) - 1, -1, -1):
        radix = len(grid[j]) + 1
        bins[j] = cell % radix
        cell //= radix
    return bins


def assign_cell(eps: np.ndarray, partition: CellPartition, previous_cell: int | None = None) -> int:
    """Transition-grid cell containing ``eps``.

    When ``previous_cell`` is given and the point lies within the
    hysteresis margin of that cell's interval on every axis, the previous
    cell is retained (per-axis Schmitt trigger).
    """
    grid = partition.cuts
    if previous_cell is None:
        bins = [_axis_bin(axis, float(x)) for axis, x in zip(grid, eps)]
        return _cell_id(bins, grid)
    h = partition.hysteresis
    prev_bins = _cell_bins(previous_cell, grid)
    bins = []
    for axis, x, pb in zip(grid, eps, prev_bins):
        x = float(x)
        lo_ok = pb == 0 or x > axis[pb - 1] - h
        hi_ok = pb == len(axis) or x <= axis[pb] + h
        bins.append(pb if (lo_ok and hi_ok) else _axis_bin(axis, x))
    return _cell_id(bins, grid)


def assign_symbol(value: np.ndarray, partition: CellPartition) -> int:
    """Alphabet symbol of a feedback-space point under the symbol grid."""
    grid = partition.symbol_cuts if partition.symbol_cuts is not None else partition.cuts
    bins = [_axis_bin(axis, float(x)) for axis, x in zip(grid, value)]
    return _cell_id(bins, grid)


def assign_control_symbol(value: np.ndarray, partition: CellPartition) -> int:
    """Control-alphabet symbol of a pure-control-space point."""
    if partition.control_cuts is None:
        return 0
    grid = partition.control_cuts
    bins = [_axis_bin(axis, float(x)) for axis, x in zip(grid, value)]
    return _cell_id(bins, grid)


# ---------------------------------------------------------------------------
# Transitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransitionList:
    """Sample times and cells at which the running cell changed.

    Entry 0 is the first sample (time ``t[0]``, its cell); subsequent
    entries are the first samples observed in a new cell.
    """

    times: np.ndarray
    cells: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return len(self.times)


def detect_transitions(trace: EpsilonTrace, partition: CellPartition) -> TransitionList:
    """Scan the trace and report every hysteresis-adjusted cell change."""
    if trace.n_samples == 0:
        raise ConfigError("empty trace")
    eps = trace.eps
    grid = partition.cuts
    if partition.hysteresis == 0.0:
        # vectorized fast path: per-axis bins via searchsorted, mixed-radix
        # combine, then change points
        cell_ids = np.zeros(len(eps), dtype=np.int64)
        for j, axis in enumerate(grid):
            radix = len(axis) + 1
            if radix == 1:
                continue
            bins = np.searchsorted(np.asarray(axis), eps[:, j], side="left")
            cell_ids = cell_ids * radix + bins
        change = np.flatnonzero(cell_ids[1:] != cell_ids[:-1]) + 1
        idx = np.concatenate([[0], change])
    else:
        cells = np.empty(len(eps), dtype=np.int64)
        cells[0] = assign_cell(eps[0], partition)
        for k in range(1, len(eps)):
            cells[k] = assign_cell(eps[k], partition, previous_cell=int(cells[k - 1]))
        change = np.flatnonzero(cells[1:] != cells[:-1]) + 1
        idx = np.concatenate([[0], change])
        return TransitionList(
            times=trace.t[idx].copy(), cells=cells[idx].copy(), indices=idx.astype(np.int64)
        )
    return TransitionList(
        times=trace.t[idx].copy(), cells=cell_ids[idx].copy(), indices=idx.astype(np.int64)
    )


# ---------------------------------------------------------------------------
# Words
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Word:
    n: int
    t_start: float
    t_end: float
    omega_symbol: int
    omega_value: np.ndarray
    v_symbol: int
    v_value: np.ndarray


@dataclass
class WordSequence:
    """The emitted dialogue: one entry per interval, plus skip warnings."""

    words: list[Word]
    alphabet_size: int
    control_alphabet_size: int
    partition: CellPartition
    warnings: list[dict] = field(default_factory=list)

    def __len__(self):
        return len(self.words)

    @property
    def omega_symbols(self) -> np.ndarray:
        return np.array([w.omega_symbol for w in self.words], dtype=np.int64)

    @property
    def v_symbols(self) -> np.ndarray:
        return np.array([w.v_symbol for w in self.words], dtype=np.int64)

    def durations(self) -> np.ndarray:
        return np.array([w.t_end - w.t_start for w in self.words])

    def median_set_duration(self) -> float:
        if not self.words:
            raise ConfigError("no words emitted")
        return float(np.median(self.durations()))

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("n,t_start,t_end,omega_symbol,v_symbol\n")
            for w in self.words:
                fh.write(f"{w.n},{w.t_start!r},{w.t_end!r},{w.omega_symbol},{w.v_symbol}\n")

    def to_json_payload(self) -> dict:
        return {
            "alphabet_size": self.alphabet_size,
            "control_alphabet_size": self.control_alphabet_size,
            "partition": self.partition.describe(),
            "words": [
                {
                    "n": w.n,
                    "t_start": w.t_start,
                    "t_end": w.t_end,
                    "omega_symbol": w.omega_symbol,
                    "omega_value": [float(x) for x in w.omega_value],
                    "v_symbol": w.v_symbol,
                    "v_value": [float(x) for x in w.v_value],
                }
                for w in self.words
            ],
            "warnings": self.warnings,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_payload(), fh, indent=2)


def partition_from_payload(payload: Mapping) -> CellPartition:
    """Rebuild a partition from the dict produced by ``describe``."""

    def grid(key):
        axes = payload.get(key)
        if axes is None:
            return None
        return tuple(tuple(float(c) for c in axis) for axis in axes)

    return CellPartition(
        cuts=grid("cuts"),
        hysteresis=float(payload.get("hysteresis", 0.0)),
        symbol_cuts=grid("symbol_cuts"),
        control_cuts=grid("control_cuts"),
    )


def words_from_json_payload(payload: Mapping) -> WordSequence:
    """Inverse of ``to_json_payload``: rebuild the full word sequence."""
    words = [
        Word(
            n=int(w["n"]),
            t_start=float(w["t_start"]),
            t_end=float(w["t_end"]),
            omega_symbol=int(w["omega_symbol"]),
            omega_value=np.asarray(w["omega_value"], dtype=float),
            v_symbol=int(w["v_symbol"]),
            v_value=np.asarray(w["v_value"], dtype=float),
        )
        for w in payload["words"]
    ]
    return WordSequence(
        words=words,
        alphabet_size=int(payload["alphabet_size"]),
        control_alphabet_size=int(payload["control_alphabet_size"]),
        partition=partition_from_payload(payload["partition"]),
        warnings=list(payload.get("warnings", [])),
    )


def read_words_csv(path) -> list[dict]:
    """Read back the tabular word export (symbols and interval bounds)."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != ["n", "t_start", "t_end", "omega_symbol", "v_symbol"]:
            raise ConfigError(f"unexpected words CSV header: {header}")
        for line in fh:
            n, t0, t1, om, v = line.strip().split(",")
            rows.append(
                {
                    "n": int(n),
                    "t_start": float(t0),
                    "t_end": float(t1),
                    "omega_symbol": int(om),
                    "v_symbol": int(v),
                }
            )
    return rows


class RunningMeanFold:
    """Incremental trapezoid averager: the word update recursion.

    Values stream in one sample at a time; at each boundary the fold closes
    the current interval using only its running accumulator and the two
    edge samples, then restarts from the shared boundary sample.  Closing
    an interval never revisits earlier samples, which is exactly the
    one-step recursive structure the emitted words must obey.
    """

    def __init__(self, first_row: np.ndarray):
        self._sum = 0.5 * np.asarray(first_row, dtype=float)
        self._count = 0
        self._last = np.asarray(first_row, dtype=float)

    def push(self, row: np.ndarray) -> None:
        self._sum += row
        self._count += 1
        self._last = np.asarray(row, dtype=float)

    def close(self) -> np.ndarray:
        """Finish the interval at the last pushed sample and restart there."""
        if self._count == 0:
            value = self._last.copy()
        else:
            value = (self._sum - 0.5 * self._last) / self._count
        self._sum = 0.5 * self._last.copy()
        self._count = 0
        return value


#: word functionals: id -> fold factory taking the first sample row
WORD_FUNCTIONALS: dict[str, Callable] = {"interval-mean": RunningMeanFold}


def emit_words_at_boundaries(
    trace: EpsilonTrace,
    traj: Trajectory,
    partition: CellPartition,
    boundary_indices: Sequence[int],
    omega_functional: str = "interval-mean",
    v_functional: str = "interval-mean",
) -> WordSequence:
    """Emit one word per interval between consecutive boundary samples.

    ``boundary_indices`` must start at 0; a trailing partial interval up to
    the final sample is emitted as well, so words tile the whole run.
    Zero-length intervals are skipped with a warning record.
    """
    if trace.n_samples != traj.n_samples:
        raise ConfigError("trace and trajectory are not aligned")
    for fid in (omega_functional, v_functional):
        if fid not in WORD_FUNCTIONALS:
            known = ", ".join(sorted(WORD_FUNCTIONALS))
            raise ConfigError(f"unknown word functional {fid!r}; registered ids: {known}")
    bounds = [int(b) for b in boundary_indices]
    if not bounds or bounds[0] != 0:
        raise ConfigError("boundary indices must start at sample 0")
    last = trace.n_samples - 1
    if bounds[-1] != last:
        bounds.append(last)

    omega_fold = WORD_FUNCTIONALS[omega_functional](trace.eps[0])
    v_fold = WORD_FUNCTIONALS[v_functional](traj.u_pure[0])
    words: list[Word] = []
    warnings: list[dict] = []
    n = 0
    prev = 0
    for b in bounds[1:]:
        if b < prev:
            raise ConfigError("boundary indices must be nondecreasing")
        if b == prev:
            warnings.append(
                {"n": n, "t": float(trace.t[b]), "reason": "empty interval skipped"}
            )
            continue
        for k in range(prev + 1, b + 1):
            omega_fold.push(trace.eps[k])
            v_fold.push(traj.u_pure[k])
        omega_value = omega_fold.close()
        v_value = v_fold.close()
        words.append(
            Word(
                n=n,
                t_start=float(trace.t[prev]),
                t_end=float(trace.t[b]),
                omega_symbol=assign_symbol(omega_value, partition),
                omega_value=omega_value,
                v_symbol=assign_control_symbol(v_value, partition),
                v_value=v_value,
            )
        )
        n += 1
        prev = b
    return WordSequence(
        words=words,
        alphabet_size=partition.alphabet_size,
        control_alphabet_size=partition.control_alphabet_size,
        partition=partition,
        warnings=warnings,
    )


def emit_words(
    trace: EpsilonTrace,
    traj: Trajectory,
    partition: CellPartition,
    omega_functional: str = "interval-mean",
    v_functional: str = "interval-mean",
) -> WordSequence:
    """Verbalize a run: intervals from cell transitions, then one word each."""
    transitions = detect_transitions(trace, partition)
    return emit_words_at_boundaries(
        trace, traj, partition, transitions.indices, omega_functional, v_functional
    )
