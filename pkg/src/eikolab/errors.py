"""Exception hierarchy shared by every module.

The CLI maps :class:`ConfigurationError` (and subclasses) to exit status 2 and
:class:`NumericalFailure` (and subclasses) to exit status 3.
"""


class EikolabError(Exception):
    """Base class for all library errors."""


class ConfigurationError(EikolabError, ValueError):
    """A parameter violates an operation's precondition."""


class ResolutionError(ConfigurationError):
    """A length scale is not resolved by the grid (e.g. epsilon < 2 dx)."""


class FormatError(EikolabError, ValueError):
    """Malformed EIKF1 file; ``line`` is the 1-based offending line (or None)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalFailure(EikolabError, RuntimeError):
    """A numerical procedure could not complete (stalled curve, empty search...)."""


class PreconditionError(NumericalFailure):
    """A data-dependent precondition (e.g. a modulus floor) failed on the field."""


class SearchFailure(NumericalFailure):
    """A search over candidates found nothing at the configured density."""
