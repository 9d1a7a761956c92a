"""Exception hierarchy shared across the toolkit.

Every error raised by the public API derives from :class:`PhrasefixError` so
the CLI can map failures onto stable exit codes (see ``cli.EXIT_CODES``).
"""
from __future__ import annotations

__all__ = [
    "PhrasefixError",
    "ConfigError",
    "DataError",
    "EstimationError",
    "ContractViolation",
]


class PhrasefixError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PhrasefixError):
    """Bad configuration: missing paths, invalid values, malformed INI."""


class DataError(PhrasefixError):
    """Malformed input data (corpus files, tables, model files)."""


class EstimationError(PhrasefixError):
    """Estimation cannot proceed (empty corpus, no extractable phrases)."""


class ContractViolation(PhrasefixError):
    """An internal precondition was violated by the caller."""
