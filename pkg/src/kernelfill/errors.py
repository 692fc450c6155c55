"""Exception hierarchy shared by all kernelfill modules."""


class KernelFillError(Exception):
    """Base class for every error raised by kernelfill."""


class InvalidInput(KernelFillError, ValueError):
    """Malformed arguments: wrong shapes, bad indices, non-finite entries."""


class NumericalError(KernelFillError, ArithmeticError):
    """Base class for failures caused by numerical conditioning."""


class NotPositiveDefinite(NumericalError):
    """A matrix required to be positive definite is not.

    ``ratio`` is the smallest eigenvalue divided by the largest one, when known.
    """

    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class SingularMatrix(NumericalError):
    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class SingularProjection(NumericalError):
    """The hidden block of the model precision could not be inverted."""


class DegenerateDirection(NumericalError):
    """A model eigendirection carries (almost) no mass under the data matrix."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DivergedNumerically(NumericalError):
    """The em iteration produced a non-finite divergence."""


class OptimizationFailed(NumericalError):
    """An iterative minimizer stopped without meeting its tolerance."""

    def __init__(self, message, iterations=None, grad_norm=None):
        super().__init__(message)
        self.iterations = iterations
        self.grad_norm = grad_norm


class DegenerateSample(KernelFillError, ValueError):
    """A sample has zero self-similarity and cannot be normalized."""

    def __init__(self, sample_id):
        super().__init__(f"sample {sample_id!r} has zero self-kernel")
        self.sample_id = sample_id
