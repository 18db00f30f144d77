"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A physical parameter or argument violates its constraints."""


class ConfigError(ValueError):
    """An experiment configuration document failed validation."""


class WorldParseError(ValueError):
    """A world map is malformed; carries the offending line/column."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        location = ""
        if line is not None:
            location = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + location)
        self.line = line
        self.column = column


class NumericalError(RuntimeError):
    """A numerical routine produced non-finite values or broke its stability bound."""


class ConvergenceError(NumericalError):
    """An iterative routine exhausted its iteration budget.

    The final residual is kept on the exception for diagnostics.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class InvariantViolation(RuntimeError):
    """A runtime consistency check failed; indicates a bug, not bad user input."""
