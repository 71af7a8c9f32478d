"""Exception types shared across the package.

Exit-code mapping used by the CLI: usage/configuration problems exit 1,
data validation failures exit 2, training divergence exits 3.
"""


class HeatGnnError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HeatGnnError):
    """Invalid configuration value or combination (window, horizon, fractions, ...)."""


class DataValidationError(HeatGnnError):
    """Malformed or out-of-contract input data (CSV parse errors, negative counts, ...)."""


class TrainingDivergedError(HeatGnnError):
    """Raised when a loss term becomes non-finite during optimization."""

    def __init__(self, epoch: int, term: str, value: float):
        self.epoch = epoch
        self.term = term
        self.value = value
        super().__init__(
            f"training diverged at epoch {epoch}: loss term '{term}' is {value!r}"
        )
