"""Exception types shared across the package.

The CLI maps these onto process exit codes: parse errors -> 2,
numerical failures -> 3, configuration errors -> 4.
"""

from __future__ import annotations


class SparseLcaError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatchError(SparseLcaError, ValueError):
    """Shapes of data and model (or two models) do not agree."""


class ConfigError(SparseLcaError, ValueError):
    """Invalid configuration or argument combination."""


class NumericalError(SparseLcaError, ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""

    def __init__(self, message: str, row_index: int | None = None):
        super().__init__(message)
        self.row_index = row_index


class DegenerateBlockError(NumericalError):
    """A partition block carries (numerically) zero posterior weight."""

    def __init__(self, message: str, block_index: int):
        super().__init__(message)
        self.block_index = block_index


class SingularInformationError(NumericalError):
    """The observed information matrix is not invertible."""

    def __init__(self, message: str, parameter_index: int):
        super().__init__(message)
        self.parameter_index = parameter_index


class ParseError(SparseLcaError, ValueError):
    """Malformed input data file."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class MissingValueError(ParseError):
    """Missing responses are not supported; ingestion rejects them."""


class PipelineStageError(SparseLcaError):
    """A pipeline stage failed; carries the stage name and partial state."""

    def __init__(self, stage: str, cause: Exception, partial_state: dict):
        super().__init__(f"pipeline stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.partial_state = partial_state
