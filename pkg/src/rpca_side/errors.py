"""Exception types raised across the package."""


class RPCAError(Exception):
    """Base class for all package errors."""


class RankDeficient(RPCAError):
    pass


class ConvergenceFailure(RPCAError):
    """The dense SVD kernel did not converge."""


class ShapeMismatch(RPCAError, ValueError):
    pass


class MaskNotBinary(RPCAError, ValueError):
    pass


class MissingL0(RPCAError, ValueError):
    pass


class DimensionOverflow(RPCAError, ValueError):
    pass


class ZeroReference(RPCAError, ValueError):
    pass


class TooSmall(RPCAError, ValueError):
    pass


class DegenerateInput(RPCAError, ValueError):
    pass


class BadMagic(RPCAError, ValueError):
    pass


class ShapeOverflow(RPCAError, ValueError):
    pass


class ParseError(RPCAError, ValueError):
    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + loc)
        self.line = line
        self.column = column


class DimensionMismatch(RPCAError, ValueError):
    pass


class UnsupportedFormat(RPCAError, ValueError):
    pass
