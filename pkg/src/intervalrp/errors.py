"""Exception hierarchy shared by every module of the toolkit."""


class IntervalRPError(Exception):
    """Base class; ``kind`` is the short machine-readable error name."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class InvalidInterval(IntervalRPError, ValueError):
    pass


class NegativeRange(IntervalRPError, ValueError):
    pass


class LengthMismatch(IntervalRPError, ValueError):
    pass


class SeriesTooShort(IntervalRPError, ValueError):
    pass


class DimMismatch(IntervalRPError, ValueError):
    pass


class ShapeMismatch(IntervalRPError, ValueError):
    pass


class MissingCache(IntervalRPError, RuntimeError):
    pass


class LabelOutOfRange(IntervalRPError, ValueError):
    pass


class MalformedRow(IntervalRPError, ValueError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class ConfigError(IntervalRPError, ValueError):
    pass


class CheckpointError(IntervalRPError, ValueError):
    pass


class NonFinite(IntervalRPError, FloatingPointError):
    pass


class IoError(IntervalRPError, OSError):
    pass
