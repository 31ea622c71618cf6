"""Exception types raised across the package."""


class MoEApproxError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(MoEApproxError, ValueError):
    pass


class DomainError(MoEApproxError, ValueError):
    """A point lies outside the domain an object is defined on."""


class ResourceError(MoEApproxError, RuntimeError):
    pass


class DegenerateWeightsError(InvalidArgumentError):
    pass


class NumericError(MoEApproxError, ArithmeticError):
    """A sampled value was non-finite; ``node`` holds the offending coordinates."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class DivergenceError(NumericError):
    pass


class PreconditionError(MoEApproxError, ValueError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node
