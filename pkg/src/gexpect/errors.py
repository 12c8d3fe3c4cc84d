"""Exception hierarchy shared by all gexpect modules."""


class GExpectError(Exception):
    """Base class for every error raised by the library."""


class DimensionError(GExpectError, ValueError):
    """Array lengths or matrix shapes are incompatible."""


class DomainError(GExpectError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class ConfigurationError(GExpectError, ValueError):
    """A solver or experiment configuration is invalid (e.g. CFL violation)."""


class DivergenceError(GExpectError, ArithmeticError):
    """A numerical scheme produced non-finite values."""


class UnsupportedError(GExpectError, NotImplementedError):
    """The request is valid in principle but outside what is implemented."""
