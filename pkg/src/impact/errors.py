"""Exception hierarchy shared by all modules."""


class ImpactError(Exception):
    """Base class for all errors raised by this package."""


class GridError(ImpactError):
    """Bad lattice definition or out-of-range index/point."""


class ParseError(ImpactError):
    """Syntax or name error in an expression string."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class EvalError(ImpactError):
    """Domain error while evaluating an expression (log of non-positive, ...)."""


class NoiseError(ImpactError):
    """Invalid noise model or bad density sample."""


class AbstractionError(ImpactError):
    """Failure while building the interval abstraction."""


class InfeasibleError(ImpactError):
    """Feasible-distribution problem has no solution (corrupted row)."""


class ConvergenceError(ImpactError):
    """Interval iteration did not converge within the iteration budget.

    Carries the per-bound self-convergence step counts when available so the
    caller can fall back to a finite-horizon run.
    """

    def __init__(self, message, k0=None, k1=None):
        super().__init__(message)
        self.k0 = k0
        self.k1 = k1


class FileFormatError(ImpactError):
    """Malformed on-disk artifact."""


class ConfigError(ImpactError):
    """Invalid or incomplete run configuration."""
