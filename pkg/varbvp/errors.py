"""
Exception hierarchy for the variational boundary value solver.
Library code raises these; only the CLI maps them to exit codes.
"""

from typing import Optional


class VarBvpError(Exception):
    """Base class for all solver errors."""


class InvalidConfig(VarBvpError):
    """Bad grid size, solver control, model name or model parameter."""


class DomainError(VarBvpError):
    """A point lies outside the model's declared domain."""


class GridMismatch(VarBvpError):
    """Two curves do not share a grid or a dimension."""


class NonRegularLagrangian(VarBvpError):
    """The velocity Hessian (or the Newton matrix) is singular or too ill-conditioned."""

    def __init__(self, message: str, condition_estimate: Optional[float] = None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class NewtonDiverged(VarBvpError):
    """An iteration failed to reach its tolerance."""

    def __init__(
        self,
        message: str,
        iterations: Optional[int] = None,
        residual_norm: Optional[float] = None,
    ):
        super().__init__(message)
        self.iterations = iterations
        self.residual_norm = residual_norm
