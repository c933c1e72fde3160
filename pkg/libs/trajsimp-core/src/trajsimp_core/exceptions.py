"""Base exceptions for trajsimp.

Every error raised on purpose by the library derives from ``TrajSimpError`` and carries an
``ErrorCategory`` so callers (the CLI in particular) can map failures to stable exit codes.
"""

from trajsimp_core._compat import StrEnum


class ErrorCategory(StrEnum):
    """Coarse classification of library failures."""

    INVALID_ARGUMENT = "invalid-argument"
    CONTRACT = "contract"
    DEGENERATE_GEOMETRY = "degenerate-geometry"
    NUMERICAL = "numerical"
    DATA = "data"
    CHECKPOINT = "checkpoint"


class TrajSimpError(Exception):
    """Base exception for all trajsimp errors."""

    def __init__(
        self,
        message: str = "An error occurred",
        category: ErrorCategory = ErrorCategory.INVALID_ARGUMENT,
    ) -> None:
        self.message = message
        self.category = category
        super().__init__(self.message)


class InvalidArgumentError(TrajSimpError):
    """Raised when an argument is outside its documented domain."""

    def __init__(self, message: str = "Invalid argument") -> None:
        super().__init__(message, category=ErrorCategory.INVALID_ARGUMENT)


class ContractError(TrajSimpError):
    """Raised when inputs violate a structural precondition (e.g. not a subsequence)."""

    def __init__(self, message: str = "Contract violated") -> None:
        super().__init__(message, category=ErrorCategory.CONTRACT)


class ShapeMismatchError(ContractError):
    """Raised by the tensor kernel when operand shapes are incompatible."""

    def __init__(self, op: str, *shapes: tuple[int, ...]) -> None:
        rendered = ", ".join(str(s) for s in shapes)
        super().__init__(f"Shape mismatch in {op}: {rendered}")


class DegenerateGeometryError(TrajSimpError):
    """Raised for zero-duration segments or zero-length headings."""

    def __init__(self, message: str = "Degenerate geometry") -> None:
        super().__init__(message, category=ErrorCategory.DEGENERATE_GEOMETRY)


class NumericalError(TrajSimpError):
    """Raised when a computation produces non-finite values."""

    def __init__(self, message: str = "Non-finite value produced") -> None:
        super().__init__(message, category=ErrorCategory.NUMERICAL)


class DataError(TrajSimpError):
    """Raised when input data cannot be read or contains nothing usable."""

    def __init__(self, message: str = "Unusable input data") -> None:
        super().__init__(message, category=ErrorCategory.DATA)


class CheckpointError(TrajSimpError):
    """Raised when a parameter checkpoint cannot be read or does not fit a model."""

    def __init__(self, message: str = "Invalid checkpoint") -> None:
        super().__init__(message, category=ErrorCategory.CHECKPOINT)
