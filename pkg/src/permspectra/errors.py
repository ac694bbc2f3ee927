"""Exception types shared across the package.

Each class maps onto one CLI exit code, see :mod:`permspectra.cli`.
"""


class ParameterError(ValueError):
    """An argument is outside its documented domain."""


class CapabilityError(NotImplementedError):
    """The requested combination of operation and law is not supported."""


class PreconditionError(ValueError):
    """A structural precondition of a limit theorem does not hold."""


class NumericalFailure(RuntimeError):
    """A numerical routine could not reach the requested accuracy.

    Parameters
    ----------
    message : str
        Human readable explanation.
    residual : float, optional
        The best residual or error estimate that was reached.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
