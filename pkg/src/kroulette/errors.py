"""Exception hierarchy shared across the package.

Validation problems (bad configs, unknown registry ids, malformed requests)
raise :class:`ConfigError`; failures that happen while a run is in flight
(numerical divergence, non-invertible couplings) raise subclasses of
:class:`RuntimeFailure`.  The CLI maps the former to exit code 2 and the
latter to exit code 3.
"""
from __future__ import annotations


class KrouletteError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(KrouletteError):
    """Invalid configuration, unknown registry id, or malformed input."""


class RuntimeFailure(KrouletteError):
    """A run started from valid inputs but could not be completed."""


class IntegrationDivergedError(RuntimeFailure):
    """The integrator produced a non-finite value.

    Carries the name of the first offending component (for example
    ``"phi[2]"``) and the simulation time at which it appeared.
    """

    def __init__(self, component: str, time: float):
        self.component = component
        self.time = time
        super().__init__(
            f"integration diverged: component {component} became non-finite at t={time:.6g}"
        )


class NonInvertibleCouplingError(RuntimeFailure):
    """A coupling could not be inverted at some sample during recovery."""

    def __init__(self, sample_index: int, detail: str):
        self.sample_index = sample_index
        super().__init__(f"non-invertible coupling at sample {sample_index}: {detail}")
