"""Exception hierarchy shared across the package."""


class LiftworldsError(Exception):
    """Base class for every error this package raises deliberately."""


class ParseError(LiftworldsError):
    """Malformed input text (program file, model file, query string)."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None and column is not None:
            message = f"line {line}, column {column}: {message}"
        elif line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(LiftworldsError):
    """Structurally invalid model, constraint, world, or query."""


class NotCountNormalized(LiftworldsError):
    """Lifted sum-out needs every kept tuple to extend to the same number of groundings."""


class ConstraintsMisaligned(LiftworldsError):
    """Lifted multiply needs the constraint join to pair groundings one-to-one."""


class InferenceError(LiftworldsError):
    """Query answering failed (atom not in model, inconsistent evidence, ...)."""
