"""Exception types raised across the package."""


class MortError(Exception):
    """Base class for all errors raised by this package."""


class NoForeground(MortError, ValueError):
    pass


class NotPowerOfTwo(MortError, ValueError):
    pass


class ContourTooShort(MortError, ValueError):
    pass


class DimensionMismatch(MortError, ValueError):
    pass


class ScaleOutOfRange(MortError, IndexError):
    pass


class IndexOutOfRange(MortError, IndexError):
    pass


class OrderOutOfRange(MortError, ValueError):
    pass


class PairCountMismatch(MortError, ValueError):
    pass


class EmptyGallery(MortError, ValueError):
    pass


class InsufficientSamples(MortError, ValueError):
    pass


class SpecInfeasible(MortError, ValueError):
    pass


class ParseError(MortError, ValueError):
    """Malformed manifest or descriptor file. ``line`` is 1-based, or None."""

    def __init__(self, message, line=None):
        self.message = message
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class MissingFile(MortError, FileNotFoundError):
    pass


class ImageFormatError(MortError, ValueError):
    pass
