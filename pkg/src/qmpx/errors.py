# src/qmpx/errors.py

"""Exception types raised across the package."""


class QmpxError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatch(QmpxError, ValueError):
    """Operands have incompatible dimensions."""


class NotPositiveSemidefinite(QmpxError, ValueError):
    """A matrix required to be PSD has an eigenvalue below tolerance."""


class NotPositiveDefinite(QmpxError, ValueError):
    """A matrix required to be strictly positive definite is not."""


class NotConvex(QmpxError, ValueError):
    """Problem data violates the convexity preconditions of a lowering."""


class KindMismatch(QmpxError, ValueError):
    """Operation requires a different problem kind (T1 vs T2)."""


class SingularA(QmpxError, ValueError):
    """Closed-form solve requires an invertible quadratic coefficient."""


class NotSingleConstraintForm(QmpxError, ValueError):
    """Problem is not in the single power-constraint form Tr(X^H A1 X) <= P."""


class InfeasibleBracket(QmpxError, RuntimeError):
    """Bisection failed to bracket the multiplier."""


class ConicSolverFailure(QmpxError, RuntimeError):
    """Interior-point solve did not reach the requested accuracy."""


class InfeasibleProblem(QmpxError, RuntimeError):
    """Problem detected as infeasible."""


class NumericalBreakdown(QmpxError, RuntimeError):
    """A linear system inside the solver is singular beyond regularization."""


class MissingErrorModel(QmpxError, KeyError):
    """A channel referenced by a robust assembly has no error model."""


class UnknownVariable(QmpxError, KeyError):
    """Variable id does not name a precoder, relay matrix or equalizer."""


class InvalidParams(QmpxError, ValueError):
    """Scenario parameters are dimensionally or semantically invalid."""


class NonMonotoneDetected(QmpxError, RuntimeError):
    """Objective increased during a block-coordinate sub-step (solver bug)."""


class ConfigError(QmpxError, ValueError):
    """Simulation sweep configuration is invalid."""
