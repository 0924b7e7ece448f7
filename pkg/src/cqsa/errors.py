class CQSAError(Exception):
    """Base class for errors raised by this package."""


class ProtocolViolation(CQSAError):
    """A client submitted a value outside the bound it declared."""


class DegenerateScaling(CQSAError):
    """A nonzero phase sum was decoded under a zero-magnitude scaling context."""


class UndefinedSimilarity(CQSAError, ValueError):
    """Cosine similarity requested for a zero vector."""


class RoundFailure(CQSAError):
    """Every cluster of a round was rejected."""


class ConfigError(CQSAError, ValueError):
    """Malformed experiment configuration."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key
