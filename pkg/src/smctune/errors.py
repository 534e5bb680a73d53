class ConfigError(ValueError):
    """Invalid model, sampler or experiment configuration."""


class IngestionError(ValueError):
    """A data file could not be turned into a dataset."""


class InvalidStateError(ValueError):
    """A density was evaluated at a non-finite point."""


class DegenerateCloudError(RuntimeError):
    """All particle weights vanished."""


class RegressionError(RuntimeError):
    """The pre-tuning median regression could not be fitted."""


class ConvergenceError(RuntimeError):
    """An optimizer hit its iteration cap; ``last`` holds the final iterate."""

    def __init__(self, message, last):
        super().__init__(message)
        self.last = last
