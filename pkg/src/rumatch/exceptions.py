"""Exception types raised by the inversion routines."""


class PreconditionError(ValueError):
    """An input violates the documented precondition of an operation."""


class ConfigurationError(ValueError):
    """A model or market specification could not be understood."""


class UnsupportedOperationError(TypeError):
    """The operation is not defined for the given model class."""


class NonConvergenceError(RuntimeError):
    """An iterative solver stopped before meeting its convergence criterion.

    Parameters
    ----------
    message : str
        Human readable explanation.
    last_iterate : numpy.ndarray, optional
        The iterate held by the solver when it gave up.
    diagnostics : dict, optional
        Solver specific counters (iterations, residuals, ...).
    """

    def __init__(self, message, last_iterate=None, diagnostics=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.diagnostics = dict(diagnostics or {})
