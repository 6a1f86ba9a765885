"""Exception types shared across the toolkit."""


class FreqEditError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FreqEditError):
    """A parameter is outside its documented range."""


class ShapeError(FreqEditError):
    """Image or array dimensions do not match what an operation needs."""


class ImageIOError(FreqEditError):
    """Reading or writing an image/float-map file failed; message names the path."""


class SolverError(FreqEditError):
    """Iterative solve did not converge. Carries the achieved relative residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateProblemError(FreqEditError):
    """The problem has no usable data term (for example, all gradients are zero)."""


class MetricError(FreqEditError):
    """A score could not be computed, for example an empty valid mask."""
