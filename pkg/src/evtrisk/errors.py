"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ``DataError`` -> 2 and
``NumericalError`` -> 3. Anything else raised as ``ValueError`` is a usage
problem (exit 1).
"""


class EvtRiskError(Exception):
    """Base class for package errors."""


class DataError(EvtRiskError, ValueError):
    """Input data is malformed or violates a precondition."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TooFewExceedancesError(DataError):
    """The threshold leaves fewer exceedances than the fit requires."""


class SupportError(EvtRiskError, ValueError):
    """A value lies outside the support of a distribution."""


class QuantileBelowThresholdError(EvtRiskError, ValueError):
    """The requested tail probability is not covered by the fitted tail."""


class NumericalError(EvtRiskError, ArithmeticError):
    """A numerical procedure failed (non-convergence, non-finite values)."""


class ConvergenceError(NumericalError):
    """The likelihood optimiser did not converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
