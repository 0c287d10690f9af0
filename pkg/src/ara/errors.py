"""Exception types shared across the engine.

Every error raised on a user-facing path derives from EngineError so callers
(CLI, HTTP service) can map failures to diagnostics uniformly.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""


class ModelError(EngineError):
    """Structural problem in a diagram definition."""


class ModelFileError(ModelError):
    """A model document could not be parsed or failed validation on load."""

    def __init__(self, message: str, report: object | None = None):
        super().__init__(message)
        self.report = report


class ExprSyntaxError(EngineError):
    """Syntax error in the expression language, with source position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class ExprEvalError(EngineError):
    """Evaluation failure: unbound variable, division by zero, bad operand."""


class DistributionError(EngineError):
    """Invalid distribution parameters (negative variance, p outside [0,1], ...)."""


class DiscretizationError(EngineError):
    """A continuous node could not be discretized."""


class QueryError(EngineError):
    """Malformed inference query: unknown variable or state."""


class ImpossibleEvidenceError(QueryError):
    """The evidence assignment has probability zero under the model."""


class StageError(EngineError):
    """Backward induction cannot proceed (bad stage, irrelevant decision, ...)."""


class SessionError(EngineError):
    """Operator-session guard violation or corrupt session log."""
