"""Exception hierarchy.

``DataError`` covers problems with inputs (bad files, signals, labels) and
maps to CLI exit code 3; everything else deriving from ``RadarSomniaError``
is treated as an internal failure.
"""


class RadarSomniaError(Exception):
    pass


class DataError(RadarSomniaError, ValueError):
    pass


# signals
class EmptySignal(DataError):
    pass


class NonFiniteSample(DataError):
    pass


class SampleRateTooLow(DataError):
    pass


class SignalTooShort(DataError):
    pass


class NoBreathDetected(DataError):
    pass


class UnorderedFrames(DataError):
    pass


class LengthMismatch(DataError):
    pass


# features
class TooFewSamples(DataError):
    pass


class EmptySequence(DataError):
    pass


class GridMisalignment(DataError):
    pass


# model
class ShapeMismatch(RadarSomniaError, ValueError):
    pass


class NonPositiveTemperature(RadarSomniaError, ValueError):
    pass


class LabelOutOfRange(DataError):
    pass


class EmptyDataset(DataError):
    pass


class DivergenceDetected(RadarSomniaError, ArithmeticError):
    pass


# evaluation
class EmptyMatrix(DataError):
    pass


class TooFewSessions(DataError):
    pass


class NoSleepDetected(DataError):
    pass


# io
class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NonMonotoneTime(DataError):
    pass


class MissingMetadataField(DataError):
    pass


class SessionRejected(DataError):
    """Whole session failed quality control; ``reason`` is machine-readable."""

    def __init__(self, reason, detail=""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class VersionMismatch(DataError):
    pass


class CorruptCheckpoint(DataError):
    pass


class InvalidTransitionMatrix(RadarSomniaError, ValueError):
    pass
