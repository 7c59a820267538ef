"""Exception hierarchy shared across the package."""


class LocomanError(Exception):
    """Base class for all package errors."""


class RejectedInputError(LocomanError):
    """Input value violates an operation's preconditions."""


class DimensionMismatchError(LocomanError):
    """Two values that must share a dimension do not."""


class ConfigError(LocomanError):
    """Configuration file missing, malformed, or inconsistent."""


class CorruptFileError(LocomanError):
    """A persisted artifact failed validation (truncation, checksum, version)."""


class PlanningError(LocomanError):
    """Planner could not produce a valid plan."""

    def __init__(self, message, candidates=None, task_index=None):
        super().__init__(message)
        self.candidates = candidates or []
        self.task_index = task_index


class EvaluatorError(LocomanError):
    """Evaluator backend failure (network, parse, missing credentials)."""


class EvaluatorParseError(EvaluatorError):
    """Backend response did not match the strict response grammar."""

    def __init__(self, message, raw_text=""):
        super().__init__(message)
        self.raw_text = raw_text


class EvaluatorTimeoutError(EvaluatorError):
    """Backend call exceeded its deadline."""
