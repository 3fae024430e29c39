"""
Action, generating function and Euler-Lagrange diagnostics.

The physical action of a solution is h times the unit-interval objective
S_h = quad(L(Q, V)). Its endpoint derivatives are read from the solution's
boundary momenta.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from varbvp.config import SHOOTING_STEPS, SolverConfig
from varbvp.errors import InvalidConfig
from varbvp.grid import Curve, inner_product, mean_project, quad
from varbvp.lagrangians import LagrangianModel, energy, evaluate
from varbvp.solver import (
    BvpSolution,
    RegularizedProblem,
    Trajectory,
    reconstruct_positions,
    solve_bvp,
    stationarity_gradient,
)
from varbvp.shooting import rk4_flow, shoot_bvp

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GeneratingTriple:
    """S(q1, q2) with D1S = dS/dq1 and D2S = dS/dq2."""

    S: float
    D1S: np.ndarray
    D2S: np.ndarray
    solution: BvpSolution


def objective(model: LagrangianModel, problem: RegularizedProblem, V: Curve) -> float:
    """Discrete S_h(V) = quad(L(Q, V)) with Q reconstructed from V."""
    Q = reconstruct_positions(problem, V)
    L = evaluate(model, Q.values, V.values).L
    return float(quad(Curve(V.grid, L))[0])


def action(model: LagrangianModel, solution: BvpSolution) -> float:
    """Physical action h * quad(L(Q, V)) along a converged solution."""
    return solution.problem.h * objective(model, solution.problem, solution.V)


def directional_gradient_check(
    model: LagrangianModel,
    problem: RegularizedProblem,
    V: Curve,
    dV: Curve,
    step: float = 1e-5,
) -> Tuple[float, float, float]:
    """
    Compare the central difference of S_h along dV with <<P G, dV>>.

    dV is projected onto mean-zero curves first, the tangent space of the
    constraint level set. Returns (finite_difference, assembled, relative_error).
    """
    if step <= 0:
        raise InvalidConfig(f"step must be positive, got {step}")
    direction = mean_project(dV)
    plus = Curve(V.grid, V.values + step * direction.values)
    minus = Curve(V.grid, V.values - step * direction.values)
    finite_difference = (objective(model, problem, plus) - objective(model, problem, minus)) / (
        2.0 * step
    )
    assembled = inner_product(mean_project(stationarity_gradient(model, problem, V)), direction)
    scale = max(abs(finite_difference), abs(assembled), np.finfo(float).tiny)
    return finite_difference, assembled, abs(finite_difference - assembled) / scale


def generating_function(
    model: LagrangianModel,
    q1,
    q2,
    h: float,
    config: Optional[SolverConfig] = None,
    guess=None,
) -> GeneratingTriple:
    """Type-1 generating function S(q1, q2) and its partials -p(0), p(h)."""
    solution, _ = solve_bvp(model, q1, q2, h, config, guess=guess)
    p_start, p_end = solution.boundary_momenta
    return GeneratingTriple(
        S=action(model, solution),
        D1S=-p_start,
        D2S=p_end.copy(),
        solution=solution,
    )


def _momenta_and_forces(model: LagrangianModel, traj: Trajectory):
    jet = evaluate(model, traj.positions, traj.velocities)
    return jet.dLdv, jet.dLdq


def el_residual(model: LagrangianModel, traj: Trajectory) -> float:
    """
    max over interior samples of |d/dt[dL/dv] - dL/dq|, with the time
    derivative taken by central differences.
    """
    if traj.times.shape[0] < 3:
        raise InvalidConfig("Euler-Lagrange residual needs at least 3 samples")
    p, f = _momenta_and_forces(model, traj)
    dt = (traj.times[2:] - traj.times[:-2])[:, None]
    defect = (p[2:] - p[:-2]) / dt - f[1:-1]
    return float(np.max(np.abs(defect)))


def energy_drift(model: LagrangianModel, traj: Trajectory) -> float:
    """max_t |E(t) - mean E| along the samples."""
    E = energy(model, traj.positions, traj.velocities)
    return float(np.max(np.abs(E - np.mean(E))))


# ============================================================================
# CONVERGENCE STUDY
# ============================================================================

@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    error: float
    ratio: Optional[float]


def _shooting_reference(model, q1, q2, h, N: int) -> np.ndarray:
    v0 = shoot_bvp(model, q1, q2, h)
    substeps = max(1, -(-SHOOTING_STEPS // N))
    return rk4_flow(model, q1, v0, h, N * substeps).positions[::substeps]


def convergence_study(
    model: LagrangianModel,
    q1,
    q2,
    h: float,
    Ns: Sequence[int],
    config: Optional[SolverConfig] = None,
    exact: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> List[ConvergenceRow]:
    """
    Max position error of solve_bvp against a reference for each N, with
    the ratio to the previous row's error.

    `exact(t)` maps sample times to positions of shape (len(t), n). Without
    it the reference is the shooting oracle sampled at the grid times.
    """
    if len(Ns) == 0:
        raise InvalidConfig("convergence study needs at least one grid size")
    config = (config or SolverConfig()).validate()
    rows: List[ConvergenceRow] = []
    previous = None

    for N in Ns:
        _, traj = solve_bvp(model, q1, q2, h, config.with_overrides(N=int(N)))
        if exact is not None:
            reference = np.asarray(exact(traj.times), dtype=float).reshape(traj.positions.shape)
        else:
            reference = _shooting_reference(model, q1, q2, h, int(N))
        error = float(np.max(np.abs(traj.positions - reference)))
        ratio = previous / error if previous is not None and error > 0 else None
        rows.append(ConvergenceRow(N=int(N), error=error, ratio=ratio))
        logger.debug(f"convergence N={N}: error {error:.3e}, ratio {ratio}")
        previous = error

    return rows
