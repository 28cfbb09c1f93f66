"""
Exception hierarchy shared by the library and the command line.
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FEASIBILITY = 3


class HierlapError(Exception):
    """Base class for every error raised by the package."""

    exit_code = EXIT_FEASIBILITY


class ConfigError(HierlapError):
    """
    Invalid experiment configuration.

    Parameters:
        message (str): Human readable diagnostic.
        field (str | None): Dotted path of the offending field, when known.
    """

    exit_code = EXIT_CONFIG

    def __init__(self, message: str, field: str | None = None) -> None:
        self.field = field
        prefix = f"{field}: " if field else ""
        super().__init__(f"{prefix}{message}")


class FeasibilityError(HierlapError):
    """A numerical request cannot be honoured (truncation depth, integrability, sample size)."""


class TreeIndexError(HierlapError, IndexError):
    """Level, leaf or child index outside the truncated tree."""


class BoundsError(HierlapError, ValueError):
    """Invalid parameters for a Chen-Stein bound."""
