"""Exception hierarchy for the codec."""


class TemCodecError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(TemCodecError, ValueError):
    """An argument is outside the domain of the operation."""


class InfeasibleBiasError(TemCodecError):
    """The biased integrand stayed non-positive, so the encoder can never fire.

    Attributes
    ----------
    time : float
        Start of the interval on which no firing could be found.
    """

    def __init__(self, message, time):
        super().__init__(f"{message} (t = {time!r})")
        self.time = time


class FormatError(TemCodecError, ValueError):
    """A bitstream or serialized document is malformed.

    Attributes
    ----------
    offset : int or None
        Byte offset at which the problem was detected.
    """

    def __init__(self, message, offset=None):
        where = "" if offset is None else f" at byte offset {offset}"
        super().__init__(f"{message}{where}")
        self.offset = offset


class DegenerateSystemError(TemCodecError, ArithmeticError):
    """Every singular value of the measurement operator fell below the cutoff."""
