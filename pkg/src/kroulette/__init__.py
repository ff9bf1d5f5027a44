"""Deterministic simulator and analysis toolkit for kaleidoscope-roulettes."""

from .errors import (
    ConfigError,
    IntegrationDivergedError,
    KrouletteError,
    NonInvertibleCouplingError,
    RuntimeFailure,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "IntegrationDivergedError",
    "KrouletteError",
    "NonInvertibleCouplingError",
    "RuntimeFailure",
    "__version__",
]
