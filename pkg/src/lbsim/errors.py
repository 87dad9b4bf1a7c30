"""Exception types shared across the simulator."""


class LbSimError(Exception):
    """Base class for all simulator errors."""


class UnknownVip(LbSimError):
    """A packet or lookup referenced a VIP that is not configured."""


class ConsistencyViolation(LbSimError):
    """An established connection mapping would have been silently changed."""


class InvalidQueue(LbSimError):
    """A queue index outside the configured queue range was used."""


class InvalidOp(LbSimError):
    """An unknown operation kind was passed to the cost model."""


class UndefinedWindow(LbSimError):
    """Utilization was requested for a window with zero reference cycles."""


class InvalidSpec(LbSimError):
    """A workload specification fails validation."""


class ParseError(LbSimError):
    """A trace file record could not be parsed."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class TraceOrderError(LbSimError):
    """Trace records regressed in arrival time."""


class ConfigError(LbSimError):
    """An experiment configuration is invalid."""


class SearchRangeError(LbSimError):
    """The rate search bracket does not satisfy its preconditions."""
