"""Exception types shared across the package."""


class SemaError(Exception):
    """Base class for all package errors."""


class ShapeError(SemaError):
    """Operand shapes are incompatible for an operation."""


class ContractError(SemaError):
    """An operation precondition was violated."""


class AlignmentError(SemaError):
    """Aligned token/frame/role vectors differ in length."""


class ParseError(SemaError):
    """A data record could not be parsed.

    Carries the byte offset within the record (and the line number within a
    file, when known) so the offending input can be located.
    """

    def __init__(self, message: str, offset: int | None = None, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.offset = offset
        self.line = line


class DataError(SemaError):
    """Input data violates the expected format or is otherwise unusable."""


class TrainingDivergence(SemaError):
    """Training loss became non-finite; carries the failing step index."""

    def __init__(self, step: int, message: str | None = None):
        super().__init__(message or f"non-finite loss at training step {step}")
        self.step = step
