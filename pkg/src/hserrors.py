"""
Exception hierarchy shared by the numerical modules and the command line.

Every error carries the process exit code the command line reports for it.
"""

__all__ = [
    "ConfigError",
    "ContractError",
    "ConvergenceError",
    "DataError",
    "DomainError",
    "EmptyBoundsError",
    "HdsensError",
    "InvalidRhoError",
    "NumericalError",
]


class HdsensError(Exception):
    exit_code = 5


class ConfigError(HdsensError):
    exit_code = 2


class DataError(HdsensError):
    exit_code = 3


class NumericalError(HdsensError):
    exit_code = 4


class DomainError(NumericalError, ValueError):
    """Argument outside the domain of a special function."""


class InvalidRhoError(NumericalError):
    """The sensitivity model cannot hold at this rho for the observed residuals."""

    def __init__(self, rho, denominator):
        super().__init__(
            f"rho={rho:g} is incompatible with the data: corrected variance "
            f"denominator is {denominator:.3g}"
        )
        self.rho = rho
        self.denominator = denominator


class ConvergenceError(NumericalError):
    """An iterative fit did not converge; `partial` holds the last iterate."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class EmptyBoundsError(NumericalError):
    """No rho on the search grid satisfies the ordering constraints."""


class ContractError(HdsensError, ValueError):
    """An internal precondition was violated by the caller."""
