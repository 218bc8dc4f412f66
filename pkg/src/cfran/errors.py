"""Shared exception types."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class InvalidStateError(RuntimeError):
    """An object or sequence is inconsistent with the slot grammar."""


class PromptParseError(ValueError):
    """Prompt text is outside the template grammar."""

    def __init__(self, message: str, fragment: str = ""):
        super().__init__(message)
        self.fragment = fragment


class ReportParseError(ValueError):
    """Report token sequence is outside the report grammar."""


class TruncatedOutputError(RuntimeError):
    """Decoding hit the maximum length without emitting EOS."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class TrainingDivergedError(RuntimeError):
    """Posterior training produced a non-finite loss."""


class UndefinedCorrelationError(ValueError):
    """Cross-correlation requested on a constant series."""


class AbductionError(RuntimeError):
    """Exogenous-noise inference failed."""
