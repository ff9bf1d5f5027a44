"""Small shared helpers: seed fan-out and interval averaging.

Seed splitting rule
-------------------
Every run is driven by a single 64-bit seed.  Modules that need their own
random stream derive it as::

    rng_for(seed, label)

which hashes the string ``"{seed}/{label}"`` with SHA-256 and uses the first
eight bytes (little-endian) as the seed of a fresh ``numpy`` generator.  The
rule is pure, platform independent, and collision-resistant across labels,
so two modules never share a stream and re-running with the same seed
reproduces every draw.
"""
from __future__ import annotations

import hashlib

import numpy as np


def substream_seed(seed: int, label: str) -> int:
    """Derive the 64-bit sub-seed for ``label`` from the run seed."""
    digest = hashlib.sha256(f"{seed}/{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(seed: int, label: str) -> np.random.Generator:
    """Return the dedicated generator for one module/stream label."""
    return np.random.default_rng(substream_seed(seed, label))


def trapezoid_interval_mean(values: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Trapezoid-rule time average of ``values[start:stop+1]`` (inclusive).

    ``values`` has one row per sample on a uniform grid; the average of row
    ``start`` through row ``stop`` weights the two edge rows by one half.
    A single-row interval returns that row unchanged.
    """
    if stop < start:
        raise ValueError("interval stop precedes start")
    if stop == start:
        return np.array(values[start], dtype=float, copy=True)
    window = values[start : stop + 1]
    total = window.sum(axis=0) - 0.5 * (window[0] + window[-1])
    return total / (stop - start)
