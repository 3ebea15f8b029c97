"""Exception types shared across the package."""


class TnqcError(Exception):
    """Base class for all package errors."""


class ShapeError(TnqcError, ValueError):
    pass


class StructureError(TnqcError, ValueError):
    pass


class DegenerateDataError(TnqcError, ValueError):
    pass


class DomainError(TnqcError, ValueError):
    pass


class NumericalError(TnqcError, ArithmeticError):
    pass


class FormatError(TnqcError, ValueError):
    """Malformed dataset or checkpoint file.

    ``offset`` is the byte offset (or ``None`` for text formats) at which
    the problem was detected.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersionError(FormatError):
    pass


class ConfigError(TnqcError, ValueError):
    """Invalid run configuration; ``problems`` lists every violated field."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))
