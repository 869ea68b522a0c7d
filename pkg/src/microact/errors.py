"""Exception types shared across the package.

Every error raised deliberately by this package derives from MicroActError,
so callers can catch one base class at integration boundaries.
"""

from __future__ import annotations


class MicroActError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateUnitError(MicroActError):
    """A knowledge unit would be created with empty or whitespace-only text."""


class LabelRangeError(MicroActError):
    """An option index has no single-letter label (valid range is 0..25)."""


class ProviderError(MicroActError):
    """A completion backend failed, returned garbage, or ran out of script."""


class ProviderTimeout(ProviderError):
    """A completion call exceeded its deadline after all retries."""


class EmptyPathError(MicroActError):
    """A reasoning reply contained no parseable steps."""


class VerdictParseError(MicroActError):
    """A consistency-check reply did not end in a recognizable verdict."""


class DecomposeTooCoarseError(MicroActError):
    """A split reply produced fewer than two sub-pairs."""


class DepthExceededError(MicroActError):
    """A split would create units beyond the configured depth limit."""


class DirectiveParseError(MicroActError):
    """Model output could not be parsed into an action directive."""


class EmptySequenceError(MicroActError):
    """Perplexity was requested for an empty log-probability sequence."""


class InvalidLogProbError(MicroActError):
    """A log probability was positive, which no probability can produce."""


class BasisMismatchError(MicroActError):
    """Two complexity scores with different bases were compared."""


class ScorerUnavailableError(MicroActError):
    """The requested complexity basis cannot be computed with what is configured."""


class InvalidKernelError(MicroActError):
    """A transition kernel row is not a probability distribution."""


class NotReachedError(MicroActError):
    """A complexity schedule never crosses the threshold."""


class MissingPhaseError(MicroActError):
    """A two-call prompting method was asked for a prompt without its phase."""


class SchemaError(MicroActError):
    """A dataset line violates the record schema.

    Carries the 1-based line number and the offending field name so that
    bad files can be fixed without guesswork.
    """

    def __init__(self, line: int, field: str, detail: str = "") -> None:
        self.line = line
        self.field = field
        self.detail = detail
        message = f"line {line}, field {field!r}"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class DatasetIOError(MicroActError):
    """A dataset file could not be read or written."""


class InsufficientDataError(MicroActError):
    """A stratum has fewer records than the requested sample size."""

    def __init__(self, conflict_type: str, have: int, want: int) -> None:
        self.conflict_type = conflict_type
        self.have = have
        self.want = want
        super().__init__(
            f"conflict type {conflict_type!r} has {have} records, need {want}"
        )


class JoinError(MicroActError):
    """A trajectory references a record id absent from the dataset."""


class PriceMissingError(MicroActError):
    """No price entry exists for the model being costed."""
