"""Exception types shared across the package."""


class EmpowerdError(Exception):
    """Base class for all package errors."""


class InvalidInput(EmpowerdError, ValueError):
    pass


class InvalidConfig(EmpowerdError, ValueError):
    pass


class InvalidState(EmpowerdError, RuntimeError):
    pass


class NumericFault(EmpowerdError, ArithmeticError):
    """Raised when a loss, gradient or parameter becomes non-finite."""
