"""Exception hierarchy shared by the library and the CLI."""


class SparseStreamError(Exception):
    """Base class for all errors raised by sparsestream."""

    exit_code = 1


class InvalidInputError(SparseStreamError, ValueError):
    """Bad arguments: non-finite values, mismatched dimensions, out-of-range settings."""

    exit_code = 2


class ConfigError(InvalidInputError):
    """Rejected configuration (unknown keys, degenerate hyperparameters)."""

    exit_code = 2


class DataError(SparseStreamError):
    """Malformed or inconsistent input data."""

    exit_code = 3

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(SparseStreamError, ArithmeticError):
    """A learner produced a non-finite value; its state is poisoned."""

    exit_code = 4
