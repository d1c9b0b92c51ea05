"""Exception hierarchy shared across the toolkit.

The CLI maps the three branches to exit codes: ValidationError -> 1
(malformed files, streams, or configuration), DomainError -> 2 (well-formed
input for which the requested operation is impossible), InternalError -> 3
(invariant violation, always a bug).
"""


class EvdError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(EvdError):
    """Malformed input: files, streams, or configuration."""


class DomainError(EvdError):
    """Input is well formed but the requested operation cannot proceed."""


class InternalError(EvdError):
    """Invariant violation inside the toolkit."""


class OutOfBounds(ValidationError):
    """Event coordinate or timestamp outside the valid sensor domain."""

    def __init__(self, index: int, message: str):
        super().__init__(f"event {index}: {message}")
        self.index = index


class NegativePolarityEncoding(ValidationError):
    """Polarity value other than -1 or +1."""

    def __init__(self, index: int, value: int):
        super().__init__(f"event {index}: polarity {value} not in {{-1, +1}}")
        self.index = index
        self.value = value


class ParseError(ValidationError):
    """Unparseable text line or binary record."""

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None):
        where = ""
        if line is not None:
            where = f" (line {line})"
        elif offset is not None:
            where = f" (offset {offset})"
        super().__init__(message + where)
        self.line = line
        self.offset = offset


class MagicMismatch(ValidationError):
    """Binary file does not start with the expected magic bytes."""


class TruncatedFile(ValidationError):
    """Binary file ends before the promised payload."""


class ConfigError(ValidationError):
    """Invalid configuration value or combination."""


class MissingCheckpoint(ValidationError):
    """A checkpoint path was required but does not exist."""


class CorruptCheckpoint(ValidationError):
    """Checkpoint payload fails its integrity check."""


class EmptyStream(ValidationError):
    """An operation that needs at least one event received none."""


class DegenerateScene(DomainError):
    """Scene specification produces no intensity change anywhere."""


class ZeroVariance(DomainError):
    """All timestamps in a window coincide; the Gaussian weight is undefined."""


class NoEligibleEvents(DomainError):
    """Sampling was requested but no event is eligible to seed it."""


class DivergenceDetected(DomainError):
    """Training loss became non-finite."""


class ShapeMismatch(InternalError):
    """Tensor shapes disagree with the level specification."""
