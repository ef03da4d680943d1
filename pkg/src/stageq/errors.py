"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, PreconditionError -> 3,
NumericalError -> 4.
"""

__all__ = [
    "ConfigError",
    "InvalidParameterError",
    "PreconditionError",
    "NoStationaryDistributionError",
    "StateSpaceTooLargeError",
    "NumericalError",
    "InvalidStepSizeError",
    "IntegrationFailureError",
    "ClosureDomainError",
    "LogicError",
]


class ConfigError(ValueError):
    """Malformed configuration: bad file, bad flag, bad parameter combination."""


class InvalidParameterError(ConfigError):
    """A single parameter is out of its admissible range."""


class PreconditionError(RuntimeError):
    """An engine was asked to run outside its domain of validity."""


class NoStationaryDistributionError(PreconditionError):
    """Stationary laws exist only for constant input rate c0 < c."""


class StateSpaceTooLargeError(PreconditionError):
    """The truncated generator would not fit the oracle's size budget."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to deliver its accuracy contract."""


class InvalidStepSizeError(NumericalError):
    """A fixed-step scheme was driven with rate*dt above 1."""


class IntegrationFailureError(NumericalError):
    """Adaptive step-size control underflowed the minimum step."""


class ClosureDomainError(ValueError):
    """A closure evaluation was requested outside the wedge 0 <= rho <= eta."""


class LogicError(AssertionError):
    """Internal invariant violated; indicates a bug, not a user error."""
