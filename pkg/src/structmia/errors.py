"""Exception types shared across the toolkit."""


class ParameterError(ValueError):
    """An operation was called outside its documented parameter range."""


class FormatError(ValueError):
    """An image file could not be decoded into a supported raster."""


class DomainError(ValueError):
    """A quantity is mathematically undefined for the requested input."""


class TrainingError(RuntimeError):
    """Denoiser training diverged."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch
