"""
Exception types raised across the lab.

Everything the CLI treats as a hard error derives from `LabError` (or is a
`ValueError` raised for malformed input).
"""


class LabError(RuntimeError):
    """Base class for hard errors in the lab."""


class ConfigError(LabError):
    """Raised when a configuration file cannot be read or validated."""


class CheckpointError(LabError):
    """Raised when a checkpoint file is missing, malformed or of an unknown version."""


class ShapeMismatchError(ValueError):
    """Raised when arrays handed to a model do not have consistent shapes."""


class ReceptiveFieldError(ValueError):
    """Raised when a window is shorter than the CNN receptive field."""


class StaleCacheError(LabError):
    """Raised when a forward cache no longer matches the parameters it was built from."""


class NonFiniteError(FloatingPointError):
    """
    Raised when a non-finite value appears where only finite values are valid.

    :param message: error description
    :param step: optional time step (or tick) at which the value appeared
    """

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class TrainingDivergedError(LabError):
    """
    Raised when the training loss becomes non-finite.

    :param epoch: zero-based epoch index in which divergence was detected
    """

    def __init__(self, epoch, loss):
        super().__init__(f"Training diverged in epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


class PlantFaultError(LabError):
    """Raised when a scripted plant run trips the force cap and must abort."""
