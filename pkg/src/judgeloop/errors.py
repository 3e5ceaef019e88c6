"""Exception hierarchy shared across the harness."""


class JudgeloopError(Exception):
    """Base class for every error raised by this package."""


class CorpusError(JudgeloopError):
    """Invalid corpus contents (duplicate ids, empty text, ...)."""


class ConfigError(JudgeloopError):
    pass


class TransportError(JudgeloopError):
    """A remote call failed after exhausting its retries. Retryable by the caller."""

    retryable = True

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts


class ProtocolError(JudgeloopError):
    """A remote endpoint answered with a body that does not match the wire format."""


class ForgeValidationError(JudgeloopError):
    """A generated benchmark sample failed the closed-world checks."""
