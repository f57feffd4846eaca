"""Exception hierarchy shared by all modules.

Errors are split along two axes that the CLI maps to exit codes:
configuration problems (bad inputs, infeasible settings, misuse) versus
numerical failures (domain violations during evaluation, iteration or
subdivision budgets exhausted).
"""


class CompositeLossError(Exception):
    """Base class for all library errors."""


class ConfigurationError(CompositeLossError):
    """Invalid or infeasible configuration, dimensions, or arguments."""


class DimensionError(ConfigurationError):
    """Operand class counts or vector dimensions do not match."""


class SpecError(ConfigurationError):
    """A JSON spec could not be parsed or names an unknown kind."""

    def __init__(self, message, path=None):
        if path is not None:
            message = f"{message} (in {path})"
        super().__init__(message)
        self.path = path


class NumericalError(CompositeLossError):
    """Base class for runtime numerical failures."""


class EvaluationDomainError(NumericalError):
    """A probe point left the domain where the map is evaluable."""


class ConvergenceError(NumericalError):
    """An iterative solver exhausted its budget.

    Carries the best iterate and its residual norm for diagnostics.
    """

    def __init__(self, message, residual=None, iterate=None):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate


class AccuracyError(NumericalError):
    """A quadrature or refinement budget ran out before the tolerance.

    ``best_estimate`` holds the most accurate value obtained.
    """

    def __init__(self, message, best_estimate=None):
        super().__init__(message)
        self.best_estimate = best_estimate


class NonConvexInputError(NumericalError):
    """An operation requiring convexity was fed a non-convex composite."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class DesignError(CompositeLossError):
    """A designed loss failed its requested certification."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
