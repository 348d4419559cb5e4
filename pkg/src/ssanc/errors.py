"""Exception hierarchy.

The CLI maps :class:`ConfigError` to exit code 2 and :class:`NumericalError`
to exit code 3.
"""


class SsancError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SsancError, ValueError):
    """Invalid or inconsistent configuration, or unreadable input files."""


class InsufficientDataError(SsancError, ValueError):
    pass


class NumericalError(SsancError, ArithmeticError):
    """A factorization or adaptive estimate failed numerically."""


class NotPositiveDefiniteError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass
