"""Exception hierarchy shared by the pipeline stages.

The CLI maps each class onto an exit code, so library code raises the most
specific class that applies.
"""


class ClimRiskError(Exception):
    """Base class for all package errors."""


class DataError(ClimRiskError, ValueError):
    """Input data is malformed or violates a precondition."""


class ConfigError(ClimRiskError, ValueError):
    """Configuration or usage problem."""


class NumericalError(ClimRiskError, RuntimeError):
    """An optimisation or training run failed numerically."""


class TrainingDiverged(NumericalError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch}: loss={loss!r}")
        self.epoch = epoch
        self.loss = loss


class ConvergenceError(NumericalError):
    """Optimiser reported failure; ``trace`` holds what it returned."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
