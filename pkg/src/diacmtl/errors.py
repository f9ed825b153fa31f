"""Exception types raised across the package."""


class DiacError(Exception):
    """Base class for every error raised by diacmtl."""


class MalformedWord(DiacError, ValueError):
    pass


class LengthMismatch(DiacError, ValueError):
    pass


class AlignmentError(DiacError, ValueError):
    pass


class UnknownPosTag(DiacError, ValueError):
    pass


class EmptyCorpus(DiacError, ValueError):
    pass


class DimensionMismatch(DiacError, ValueError):
    pass


class ParseError(DiacError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IndexOutOfRange(DiacError, IndexError):
    pass


class ShapeMismatch(DiacError, ValueError):
    pass


class InvalidProbability(DiacError, ValueError):
    pass


class EmptyWord(DiacError, ValueError):
    pass


class ConfigMismatch(DiacError, ValueError):
    pass


class VersionMismatch(DiacError):
    pass


class CorruptCheckpoint(DiacError):
    pass


class DegenerateVariance(DiacError, ValueError):
    pass


class DiskFull(DiacError, OSError):
    pass


class InvalidConfig(DiacError, ValueError):
    pass
