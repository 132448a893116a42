"""Exception hierarchy shared by all modules."""


class SuperIntError(Exception):
    """Base class for every error raised by this package."""


class UnboundVariable(SuperIntError):
    pass


class DomainError(SuperIntError):
    """A primitive was evaluated outside its domain (singular point)."""


class MismatchedGeneratorCount(SuperIntError):
    pass


class ParityError(SuperIntError):
    pass


class NotEven(ParityError):
    pass


class ZeroBody(DomainError):
    pass


class IndexOutOfRange(SuperIntError):
    pass


class BodyMismatch(SuperIntError):
    pass


class NotInvertible(SuperIntError):
    pass


class SingularV(SuperIntError):
    pass


class SignAmbiguous(SuperIntError):
    pass


class NotDerivation(SuperIntError):
    pass


class NoAdaptedCoordinates(SuperIntError):
    pass


class NodeSingularity(SuperIntError):
    pass


class NonFinite(SuperIntError):
    pass


class InvalidCornerData(SuperIntError):
    pass


class ParseError(SuperIntError):
    def __init__(self, message, line=None, column=None, source=None):
        self.line = line
        self.column = column
        self.source = source
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where = f" ({where})"
        prefix = f"{source}: " if source else ""
        super().__init__(f"{prefix}{message}{where}")


class DecayWarning(UserWarning):
    """The integrand does not vanish on an undeclared part of the region boundary."""


class PrecisionAdvisory(UserWarning):
    """Masked (indicator) quadrature converges slowly near curved boundaries."""
