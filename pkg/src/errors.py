"""Exception hierarchy shared by every package in ``src``.

The CLI maps the three families onto exit codes: configuration problems (2),
optimal-control solver failures (3) and numerical failures (4).
"""


class MetaMpcError(Exception):
    """Base class for all errors raised by the meta-tuner."""

    exit_code: int = 1


class ConfigError(MetaMpcError):
    """Invalid experiment configuration or CLI combination."""

    exit_code = 2


class SolverError(MetaMpcError):
    """The optimal control problem could not be solved."""

    exit_code = 3


class OcpInfeasibleError(SolverError):
    """Initial state already violates the position bound."""


class OcpSolverFailure(SolverError):
    """IPOPT returned a non-finite iterate or crashed."""


class NumericError(MetaMpcError):
    """Linear-algebra or gradient failure."""

    exit_code = 4


class NotStabilizableError(NumericError):
    """The DARE has no stabilizing solution for the given (A, B, Q, R)."""


class NoConvergenceError(NumericError):
    """An iterative Riccati solve diverged or its residual stalled."""


class SingularInnerMatrixError(NumericError):
    """R + B^T S B is not positive definite."""


class SingularJacobianError(NumericError):
    """The implicit-function Jacobian of the Riccati system is singular."""


class NonFiniteGradientError(NumericError):
    """A policy or value gradient contained NaN or inf."""


class GpdDomainError(NumericError):
    """1 + alpha * N <= 0 for a generalized Poisson evaluation."""
