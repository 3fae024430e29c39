"""
Initial value integration by composing boundary value solves.

A step from (q_k, p_k) looks for the endpoint q_{k+1} whose generating
function matches the incoming momentum, D1S(q_k, q_{k+1}) + p_k = 0, and
returns p_{k+1} = D2S(q_k, q_{k+1}). No differential equation is
integrated; every step is one regularized boundary value problem plus an
outer Newton iteration on q_{k+1}.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from varbvp.action import GeneratingTriple, generating_function
from varbvp.config import OUTER_MAX_ITER, OUTER_TOLERANCE, SolverConfig
from varbvp.errors import (
    DomainError,
    InvalidConfig,
    NewtonDiverged,
    NonRegularLagrangian,
    VarBvpError,
)
from varbvp.grid import Curve
from varbvp.lagrangians import LagrangianModel, energy, legendre, legendre_inverse
from varbvp.utils import as_vector, fd_steps

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PhasePoint:
    """Position and momentum dL/dv."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float)).copy()
        p = np.atleast_1d(np.asarray(self.p, dtype=float)).copy()
        if q.shape != p.shape or q.ndim != 1:
            raise InvalidConfig(f"q and p must be vectors of equal length, got {q.shape}, {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise InvalidConfig("phase point must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)


@dataclass(frozen=True, eq=False)
class StepRecord:
    """One accepted step and how it was reached."""

    point: PhasePoint
    triple: GeneratingTriple
    outer_iterations: int
    momentum_mismatch: float

    @property
    def inner_residual(self) -> float:
        return self.triple.solution.residual_norm

    @property
    def condition_estimate(self) -> float:
        return self.triple.solution.condition_estimate


@dataclass
class DiscreteFlow:
    """
    Sequence of phase points at times k*h.

    When a step fails the flow stops there: `error` holds the exception and
    `failed_step` the index of the step that could not be taken.
    """

    h: float
    v0: Optional[np.ndarray] = None
    points: List[PhasePoint] = field(default_factory=list)
    records: List[StepRecord] = field(default_factory=list)
    error: Optional[VarBvpError] = None
    failed_step: Optional[int] = None

    @property
    def completed_steps(self) -> int:
        return len(self.records)

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(len(self.points))

    @property
    def positions(self) -> np.ndarray:
        return np.array([point.q for point in self.points])

    @property
    def momenta(self) -> np.ndarray:
        return np.array([point.p for point in self.points])

    def velocities(self, model: LagrangianModel) -> np.ndarray:
        """Velocities by inverse Legendre transform; the first one is v0 when known."""
        first, rest = self.points[0], self.points[1:]
        v0 = self.v0 if self.v0 is not None else legendre_inverse(model, first.q, first.p)
        return np.array([v0] + [legendre_inverse(model, pt.q, pt.p) for pt in rest])

    def energies(self, model: LagrangianModel) -> np.ndarray:
        return energy(model, self.positions, self.velocities(model))


def _mismatch(triple: GeneratingTriple, point: PhasePoint) -> np.ndarray:
    return triple.D1S + point.p


def advance(
    model: LagrangianModel,
    point: PhasePoint,
    h: float,
    config: Optional[SolverConfig] = None,
    guess: Optional[Tuple[Curve, np.ndarray]] = None,
) -> StepRecord:
    """
    Take one step, returning the new point together with the boundary
    solution that produced it (used to warm start the next step).

    The outer Jacobian dF/dq_{k+1} is assembled by forward differences,
    one extra boundary solve per component.
    """
    config = (config or SolverConfig()).validate()
    if not (np.isfinite(h) and h > 0):
        raise InvalidConfig(f"h must be positive, got {h}")
    if point.q.shape[0] != model.dim:
        raise InvalidConfig(f"{model.name} has dimension {model.dim}, point has {point.q.shape[0]}")
    n = model.dim

    q_next = point.q + h * legendre_inverse(model, point.q, point.p)
    triple = generating_function(model, point.q, q_next, h, config, guess=guess)
    F = _mismatch(triple, point)
    norm = float(np.max(np.abs(F)))

    for iteration in range(OUTER_MAX_ITER + 1):
        logger.debug(f"outer iter {iteration}: momentum mismatch {norm:.3e}")
        if norm <= OUTER_TOLERANCE:
            return StepRecord(
                point=PhasePoint(q_next, triple.D2S),
                triple=triple,
                outer_iterations=iteration,
                momentum_mismatch=norm,
            )
        if iteration == OUTER_MAX_ITER:
            break

        warm = (triple.solution.V, triple.solution.lam)
        deltas = fd_steps(q_next)
        sensitivity = np.empty((n, n))
        for b in range(n):
            shifted = q_next.copy()
            shifted[b] += deltas[b]
            moved = generating_function(model, point.q, shifted, h, config, guess=warm)
            sensitivity[:, b] = (_mismatch(moved, point) - F) / deltas[b]
        try:
            correction = np.linalg.solve(sensitivity, F)
        except np.linalg.LinAlgError as e:
            raise NewtonDiverged(
                "momentum-matching Jacobian is singular",
                iterations=iteration,
                residual_norm=norm,
            ) from e

        t = 1.0
        for _ in range(config.max_backtracks + 1):
            trial = q_next - t * correction
            try:
                trial_triple = generating_function(model, point.q, trial, h, config, guess=warm)
            except DomainError:
                t *= config.damping_factor
                continue
            trial_F = _mismatch(trial_triple, point)
            trial_norm = float(np.max(np.abs(trial_F)))
            if trial_norm < norm:
                break
            t *= config.damping_factor
        else:
            raise NewtonDiverged(
                f"momentum matching stalled (mismatch {norm:.3e})",
                iterations=iteration,
                residual_norm=norm,
            )
        q_next, triple, F, norm = trial, trial_triple, trial_F, trial_norm

    raise NewtonDiverged(
        f"momentum matching did not converge in {OUTER_MAX_ITER} iterations (mismatch {norm:.3e})",
        iterations=OUTER_MAX_ITER,
        residual_norm=norm,
    )


def step(
    model: LagrangianModel,
    point: PhasePoint,
    h: float,
    config: Optional[SolverConfig] = None,
    guess: Optional[Tuple[Curve, np.ndarray]] = None,
) -> PhasePoint:
    """(q_k, p_k) -> (q_{k+1}, D2S(q_k, q_{k+1}))."""
    return advance(model, point, h, config, guess).point


def integrate_ivp(
    model: LagrangianModel,
    q0,
    v0,
    h: float,
    steps: int,
    config: Optional[SolverConfig] = None,
) -> DiscreteFlow:
    """
    Integrate from (q0, v0) for `steps` steps of size h.

    Failures inside a step do not raise: the flow is returned truncated with
    the error recorded. Bad arguments still raise InvalidConfig.
    """
    config = (config or SolverConfig()).validate()
    if isinstance(steps, bool) or int(steps) != steps or steps < 1:
        raise InvalidConfig(f"steps must be a positive integer, got {steps}")
    if not (np.isfinite(h) and h > 0):
        raise InvalidConfig(f"h must be positive, got {h}")
    q0 = as_vector(q0, model.dim, "q0")
    v0 = as_vector(v0, model.dim, "v0")

    flow = DiscreteFlow(h=float(h), v0=v0)
    point = PhasePoint(q0, legendre(model, q0, v0))
    flow.points.append(point)
    guess = None

    for k in range(int(steps)):
        try:
            record = advance(model, point, h, config, guess=guess)
        except (NewtonDiverged, NonRegularLagrangian, DomainError) as e:
            logger.warning(f"Flow stopped at step {k + 1} of {steps}: {e}")
            flow.error = e
            flow.failed_step = k + 1
            break
        flow.records.append(record)
        flow.points.append(record.point)
        point = record.point
        guess = (record.triple.solution.V, record.triple.solution.lam)

    logger.info(
        f"{model.name}: integrated {flow.completed_steps} of {steps} steps with h={h:.6g}"
    )
    return flow
