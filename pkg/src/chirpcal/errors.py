"""Exception types raised across the package."""


class ChirpCalError(Exception):
    """Base class for all package errors."""


class ParameterError(ChirpCalError, ValueError):
    """Invalid argument or violated precondition."""


class DelayRangeError(ParameterError):
    """Cross-correlation peak landed on the edge of the lag range."""


class MeasurementError(ChirpCalError):
    """A derived measurement is physically meaningless (e.g. nonpositive gain)."""


class CoverageError(ChirpCalError):
    """Captures are missing for some (temperature, path) combinations."""

    def __init__(self, gaps):
        self.gaps = list(gaps)
        lines = ", ".join(f"{path} @ {temp:g} C" for temp, path in self.gaps)
        super().__init__(f"missing captures: {lines}")


class DivergenceError(ChirpCalError):
    """The optimizer produced a non-finite or exploding cost."""

    def __init__(self, message, epoch, state, context=None):
        self.epoch = epoch
        self.state = state
        self.context = context
        if context:
            message = f"{message} ({context})"
        super().__init__(f"{message} at epoch {epoch}")


class BenchmarkError(ChirpCalError):
    """Every run of one algorithm failed."""


class ConfigError(ChirpCalError):
    """Scenario configuration could not be parsed or validated."""
