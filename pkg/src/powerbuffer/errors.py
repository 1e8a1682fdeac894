"""Exception types raised by the power buffer models."""


class PowerBufferError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(PowerBufferError, ValueError):
    """An argument lies outside the domain of a formula."""


class DegenerateCircuitError(PowerBufferError, ZeroDivisionError):
    pass


class CalibrationRangeError(DomainError):
    """State of discharge outside the calibrated range, or a non-physical EMF/resistance."""


class DepletedBatteryError(CalibrationRangeError):
    pass


class InfeasibleDemandError(DomainError):
    """The battery cannot deliver the requested mismatch power at any dc-link voltage."""


class ConfigurationError(PowerBufferError, ValueError):
    pass


class SingularLinearizationError(DomainError):
    pass


class UnstableModelError(DomainError):
    """An operation that assumes a stable linear model was given an unstable one."""
