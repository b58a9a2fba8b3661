"""
Error types raised by the pricing app.

Every error carries a stable ``code`` used in quote diagnostics and in the
``stockloan`` command output.
"""


class StockLoanError(Exception):
    """Base class for all stock loan engine errors."""

    code = 'stockloan-error'

    def as_diagnostic(self):
        return {'error': self.code, 'message': str(self)}


class InvalidParameterError(StockLoanError, ValueError):
    """A parameter violates its type invariant (e.g. ``a <= q``)."""

    code = 'invalid-parameter'


class InadmissibleParametersError(StockLoanError):
    """The market/loan pair lies outside every admissible regime."""

    code = 'inadmissible'


class NegativeDiscriminantError(StockLoanError):
    """mu^2 - 2(gamma - r) < 0; inadmissible inputs escaped validation."""

    code = 'negative-discriminant'


class DomainError(StockLoanError, ValueError):
    """An argument lies outside the domain of the requested function."""

    code = 'domain'


class MarginTooLargeError(StockLoanError):
    """Margin fraction k exceeds the admissible bound h(q/a)."""

    code = 'margin-too-large'


class BracketFailureError(StockLoanError):
    """No sign change of the boundary equation above q/a."""

    code = 'bracket-failure'


class NegativeFeeError(StockLoanError):
    """The fair fee came out negative in the active case."""

    code = 'negative-fee'


class OutOfRangeError(StockLoanError):
    """A target lies outside the achievable interval."""

    code = 'out-of-range'


class MonotonicityViolationError(StockLoanError):
    """Endpoint evaluation contradicts the assumed monotone ordering."""

    code = 'monotonicity-violation'


class SimConfigError(StockLoanError, ValueError):
    """Invalid Monte Carlo configuration."""

    code = 'sim-config'
