"""Exception types raised by the package."""


class BatteryError(Exception):
    """Base class for all package errors."""


class ValidationError(BatteryError, ValueError):
    """Invalid parameters, configuration or input state."""


class InvariantViolation(BatteryError, ArithmeticError):
    """A density-matrix or channel invariant failed beyond tolerance."""


class NonCharging(BatteryError, ValueError):
    """The protocol has v + Omega <= 0, so no full-charge step exists."""


class ZeroSteps(BatteryError, ValueError):
    """A power was requested at k = 0, where it is undefined."""
