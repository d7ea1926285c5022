"""Exception types shared across the engine."""


class PalError(Exception):
    """Base class for all engine errors."""


# signal
class WindowTooShort(PalError):
    pass


class TooFewBeats(PalError):
    pass


class DegenerateSeries(PalError):
    pass


# context
class StaleEvent(PalError):
    pass


class InvalidCoordinates(PalError):
    pass


class InvalidRange(PalError):
    pass


# rules / documents
class SchemaError(PalError):
    """Validation failure with a path into the offending document."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


# perception
class EmptyEnrollment(PalError):
    pass


class DimensionMismatch(PalError):
    pass


class ProviderUnavailable(PalError):
    pass


# replay
class ParseError(PalError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class TimestampRegression(PalError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class InvalidParams(PalError):
    pass


class InvalidInput(PalError):
    pass


# store
class StoreClosed(PalError):
    pass


class IoFailure(PalError):
    pass


class VersionConflict(PalError):
    pass


class NotFound(PalError):
    pass


class Busy(PalError):
    pass
