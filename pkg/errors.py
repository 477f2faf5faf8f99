"""
Cellmode Errors

Exception hierarchy shared by the library modules. The CLI turns any
CellModeError into exit code 2.
"""

from typing import Any, Optional, Sequence


class CellModeError(Exception):
    """Base class for every domain failure raised by cellmode"""


class TraceParseError(CellModeError):
    """A trace or instance file row could not be parsed"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TraceValidationError(CellModeError):
    """A parsed trace breaks the Trace invariants"""

    def __init__(self, violations: Sequence[Any]):
        self.violations = list(violations)
        first = self.violations[0] if self.violations else None
        summary = str(first) if first is not None else "invalid trace"
        if len(self.violations) > 1:
            summary += f" (+{len(self.violations) - 1} more)"
        super().__init__(summary)


class DomainError(CellModeError, ValueError):
    """An argument lies outside the domain of a numeric operation"""


class TrainingError(CellModeError):
    """The decision tree cannot be trained on the given instances"""


class ModelLoadError(CellModeError):
    """A model file is corrupt, truncated or of an unknown version"""


class EvaluationError(CellModeError):
    """Cross-validation or metric computation preconditions are not met"""


class ConfigError(CellModeError):
    """A RunConfig file or value is invalid"""
