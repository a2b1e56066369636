"""Exception types shared across the toolkit.

Plain ``ValueError`` is used for invalid arguments; the classes here cover
failure modes that callers may want to handle separately.
"""


class DegenError(Exception):
    """Base class for degenkit-specific failures."""


class NumericFailure(DegenError):
    """A numerical operation produced non-finite values or diverged.

    Carries the location of the failure when known (time step during a
    forward pass, epoch/step during training).
    """

    def __init__(self, message, step=None, epoch=None):
        super().__init__(message)
        self.step = step
        self.epoch = epoch


class CorruptCheckpoint(DegenError):
    """A checkpoint file is malformed, truncated, or inconsistent."""


class InsufficientData(DegenError):
    """Not enough usable entries to compute the requested statistic."""


class ConfigError(DegenError):
    """An experiment config failed validation.

    ``path`` points at the offending key, dotted from the document root.
    """

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
