"""Exception hierarchy shared across the toolkit.

Two broad families matter to callers: configuration problems (bad inputs,
rejected before any computation starts) and numerical failures (a computation
was attempted and did not produce a usable result).  The CLI maps the former
to exit code 1 and the latter to exit code 2.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ToolkitError):
    """Invalid configuration or arguments, detected before computation."""


class DomainError(ConfigError):
    """An argument value is outside the operation's domain (non-finite
    point, empty index set, mismatched lengths, ...)."""


class NumericsError(ToolkitError):
    """A numerical computation failed or did not converge."""


class IntegrationError(NumericsError):
    """Non-finite state encountered during time integration.

    Attributes
    ----------
    step : int
        Index of the RK4 step at which the state became non-finite.
    """

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class AssemblyError(NumericsError):
    """Transition-matrix assembly failed.

    Attributes
    ----------
    box : int
        Index of the offending box, when one can be named.
    """

    def __init__(self, message: str, box: int | None = None):
        super().__init__(message)
        self.box = box


class ConvergenceError(NumericsError):
    """An iterative solve stopped without reaching its tolerance.

    Attributes
    ----------
    residual : float
        Residual achieved when the iteration gave up.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class DegeneracyError(NumericsError):
    """A quantity required to be positive or invertible degenerated."""


class PartitionError(NumericsError):
    """Sign-structure partition extraction could not produce the requested
    number of sets.

    Attributes
    ----------
    achievable : int
        Number of connected sign components actually available.
    """

    def __init__(self, message: str, achievable: int):
        super().__init__(message)
        self.achievable = achievable
