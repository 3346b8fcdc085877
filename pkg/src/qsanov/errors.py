"""Exception types raised across the package."""


class QsanovError(ValueError):
    """Base class for rejected inputs."""


class NotHermitianError(QsanovError):
    pass


class NotPSDError(QsanovError):
    pass


class DimensionMismatchError(QsanovError):
    pass


class DimensionGuardError(QsanovError):
    """Raised when a materialized operator would exceed the configured dimension guard."""


class ModelError(QsanovError):
    """Invalid source model or an operation unsupported for the given variant."""


class ConfigError(QsanovError):
    """Experiment configuration failed validation.

    ``path`` is the dotted field path of the offending entry.
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
