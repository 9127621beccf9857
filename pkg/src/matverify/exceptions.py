"""Exception types shared across the package."""


class MatverifyError(Exception):
    """Base class for all errors raised by matverify."""


class DimensionError(MatverifyError, ValueError):
    """Operand shapes do not compose."""


class DomainError(MatverifyError, ValueError):
    """An argument lies outside the accepted domain (n = 0, bad index, ...)."""


class RangeError(MatverifyError, ArithmeticError):
    """A computed quantity overflowed or underflowed binary64."""


class MatrixFormatError(MatverifyError, ValueError):
    """A matrix text file could not be parsed."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
