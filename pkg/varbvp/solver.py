"""
Regularized boundary value solver.

The unknown is the velocity curve V on [0, 1]; positions follow by
integration, Q(u) = q1 + h * int_0^u V. Critical points of
S_h(V) = int_0^1 L(Q, V) du on the level set int_0^1 V = z are found by
damped Newton on the multiplier system

    G_i = dL/dv(Q_i, V_i) + h * A(dL/dq(Q, V))_i - lambda = 0,   quad(V) - z = 0,

where A is the adjoint of the trapezoid running integral, so G is the exact
weak gradient of the discrete S_h. Newton is continued in h from h = 0,
where the solution is the constant curve z.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgWarning, get_lapack_funcs, lu_factor, lu_solve

from varbvp.config import ARMIJO_SLOPE, SolverConfig
from varbvp.errors import DomainError, InvalidConfig, NewtonDiverged, NonRegularLagrangian
from varbvp.grid import (
    Curve,
    Grid,
    cumulative,
    cumulative_adjoint,
    cumulative_adjoint_matrix,
    cumulative_matrix,
    make_grid,
    quad,
    trapezoid_weights,
)
from varbvp.lagrangians import (
    LagrangianJet,
    LagrangianModel,
    evaluate,
    legendre,
    legendre_inverse,
    regularity_check,
    second_derivatives,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RegularizedProblem:
    """Parameters (q1, z, h) of the regularized problem; z = (q2 - q1)/h."""

    q1: np.ndarray
    z: np.ndarray
    h: float

    def __post_init__(self):
        q1 = np.atleast_1d(np.asarray(self.q1, dtype=float))
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        if q1.shape != z.shape or q1.ndim != 1:
            raise InvalidConfig(f"q1 and z must be vectors of equal length, got {q1.shape}, {z.shape}")
        if not (np.all(np.isfinite(q1)) and np.all(np.isfinite(z))):
            raise InvalidConfig("q1 and z must be finite")
        h = float(self.h)
        if not (np.isfinite(h) and h >= 0):
            raise InvalidConfig(f"h must be finite and non-negative, got {self.h}")
        object.__setattr__(self, "q1", q1)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "h", h)

    @property
    def dim(self) -> int:
        return self.q1.shape[0]

    @property
    def q2(self) -> np.ndarray:
        return self.q1 + self.h * self.z

    def at(self, h: float) -> "RegularizedProblem":
        return RegularizedProblem(self.q1, self.z, h)


@dataclass(frozen=True, eq=False)
class BvpSolution:
    """
    Converged velocity curve, multiplier and reconstructed positions.

    p_start and p_end are the boundary momenta lambda - h*quad(dL/dq) and
    lambda; they are the exact endpoint derivatives (-D1, +D2) of the
    discrete action h*quad(L).
    """

    problem: RegularizedProblem
    V: Curve
    lam: np.ndarray
    Q: Curve
    residual_norm: float
    iterations: int
    condition_estimate: float
    p_start: np.ndarray = field(default=None)
    p_end: np.ndarray = field(default=None)

    @property
    def boundary_momenta(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.p_start, self.p_end


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Samples (t_i, q(t_i), v(t_i)) of an evolution on [0, h]."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    h: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))
        if positions.shape[0] != times.shape[0]:
            positions, velocities = positions.T, velocities.T
        if not (times.shape[0] == positions.shape[0] == velocities.shape[0]):
            raise InvalidConfig("trajectory arrays must have equal lengths")
        if times.shape[0] >= 2 and not np.all(np.diff(times) > 0):
            raise InvalidConfig("trajectory times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "velocities", velocities)
        object.__setattr__(self, "h", float(self.h))

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


def reconstruct_positions(problem: RegularizedProblem, V: Curve) -> Curve:
    """Q_i = q1 + h * cumulative(V)_i."""
    return Curve(V.grid, problem.q1 + problem.h * cumulative(V).values)


def _evaluate_curve(model: LagrangianModel, problem: RegularizedProblem, V: Curve):
    Q = reconstruct_positions(problem, V)
    return Q, evaluate(model, Q.values, V.values)


def _residual_from_jet(problem, V: Curve, lam, jet: LagrangianJet) -> np.ndarray:
    force_integral = cumulative_adjoint(Curve(V.grid, jet.dLdq)).values
    G = jet.dLdv + problem.h * force_integral - lam
    return np.concatenate([G.ravel(), quad(V) - problem.z])


def residual(model: LagrangianModel, problem: RegularizedProblem, V: Curve, lam) -> np.ndarray:
    """
    Stacked residual (G_0, ..., G_N, quad(V) - z) of length n(N+1) + n.

    A zero residual is discrete stationarity of S_h on the constraint level
    set. DomainError propagates from model evaluation.
    """
    _, jet = _evaluate_curve(model, problem, V)
    return _residual_from_jet(problem, V, np.asarray(lam, dtype=float), jet)


def stationarity_gradient(model: LagrangianModel, problem: RegularizedProblem, V: Curve) -> Curve:
    """G-part of the residual with lambda = 0: the weak gradient of S_h at V."""
    _, jet = _evaluate_curve(model, problem, V)
    return Curve(V.grid, jet.dLdv + problem.h * cumulative_adjoint(Curve(V.grid, jet.dLdq)).values)


def jacobian(model: LagrangianModel, problem: RegularizedProblem, V: Curve, lam=None) -> np.ndarray:
    """
    Dense Jacobian of `residual` with respect to (V nodes, lambda).

    At h = 0 the V-block is block diagonal with blocks d2L/dv2(q1, V_i).
    The residual is affine in lambda, so lam is accepted for symmetry only.
    """
    grid = V.grid
    n = V.dim
    M = grid.size
    h = problem.h
    Q = reconstruct_positions(problem, V)
    blocks = second_derivatives(model, Q.values, V.values)
    hvv, hqv, hqq = blocks.d2Ldv2, blocks.d2Ldqdv, blocks.d2Ldq2

    C = cumulative_matrix(grid)
    A = cumulative_adjoint_matrix(grid)
    diag = np.arange(M)

    J4 = np.empty((M, n, M, n))
    for a in range(n):
        for b in range(n):
            block = np.zeros((M, M))
            if h != 0.0:
                # chain rule through Q = q1 + h C V
                block += h * C * hqv[:, a, b][:, None]
                block += h * A * hqv[:, b, a][None, :]
                block += h * h * (A * hqq[:, a, b][None, :]) @ C
            block[diag, diag] += hvv[:, a, b]
            J4[:, a, :, b] = block

    size = M * n
    J = np.zeros((size + n, size + n))
    J[:size, :size] = J4.reshape(size, size)
    J[:size, size:] = -np.tile(np.eye(n), (M, 1))
    J[size:, :size] = np.kron(trapezoid_weights(grid)[None, :], np.eye(n))
    return J


def _factor(J: np.ndarray, cond_threshold: float):
    """LU factors and the infinity-norm condition estimate from LAPACK gecon."""
    if not np.all(np.isfinite(J)):
        raise NonRegularLagrangian("Newton matrix has non-finite entries")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(J, check_finite=False)
    if np.any(np.diag(lu) == 0.0):
        raise NonRegularLagrangian("Newton matrix is singular", condition_estimate=np.inf)

    gecon, = get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, np.linalg.norm(J, np.inf), norm="I")
    condition = np.inf if rcond <= 0 else 1.0 / rcond
    if info != 0 or not np.isfinite(condition) or condition > cond_threshold:
        raise NonRegularLagrangian(
            f"Newton matrix too ill-conditioned (estimate {condition:.3g}, "
            f"threshold {cond_threshold:.3g})",
            condition_estimate=condition,
        )
    return (lu, piv), condition


def _pack(V: Curve, lam) -> np.ndarray:
    return np.concatenate([V.values.ravel(), np.asarray(lam, dtype=float)])


def _unpack(x: np.ndarray, grid: Grid, n: int):
    size = grid.size * n
    return x[:size].reshape(grid.size, n), x[size:]


def _trial_residual(model, problem, grid, n, x) -> Tuple[float, Optional[np.ndarray]]:
    if not np.all(np.isfinite(x)):
        return np.inf, None
    values, lam = _unpack(x, grid, n)
    try:
        R = residual(model, problem, Curve(grid, values), lam)
    except DomainError:
        return np.inf, None
    return float(np.max(np.abs(R))), R


def _finish(model, problem, V: Curve, lam, norm, iterations, condition) -> BvpSolution:
    Q, jet = _evaluate_curve(model, problem, V)
    lam = np.array(lam, dtype=float)
    p_start = lam - problem.h * quad(Curve(V.grid, jet.dLdq))
    return BvpSolution(
        problem=problem,
        V=V,
        lam=lam,
        Q=Q,
        residual_norm=norm,
        iterations=iterations,
        condition_estimate=condition,
        p_start=p_start,
        p_end=lam.copy(),
    )


def newton(
    model: LagrangianModel,
    problem: RegularizedProblem,
    guess_V: Curve,
    guess_lambda,
    config: SolverConfig,
) -> BvpSolution:
    """
    Damped Newton on (V, lambda) with backtracking on the residual infinity-norm.

    Raises NewtonDiverged when max_iter is exceeded, the line search stalls
    or a node velocity leaves |V| <= v_max; NonRegularLagrangian when the
    Newton matrix is singular or its condition estimate exceeds
    cond_threshold.
    """
    grid, n = guess_V.grid, guess_V.dim
    if n != problem.dim:
        raise InvalidConfig(f"guess has dimension {n}, problem has {problem.dim}")
    x = _pack(guess_V, guess_lambda)
    norm, R = _trial_residual(model, problem, grid, n, x)
    if R is None:
        raise DomainError(f"{model.name}: initial guess leaves the model domain")

    condition = None
    for iteration in range(config.max_iter + 1):
        logger.debug(f"h={problem.h:.6g} iter {iteration}: residual {norm:.3e}")
        if norm <= config.tol:
            values, lam = _unpack(x, grid, n)
            V = Curve(grid, values)
            if condition is None:
                _, condition = _factor(jacobian(model, problem, V, lam), config.cond_threshold)
            return _finish(model, problem, V, lam, norm, iteration, condition)
        if iteration == config.max_iter:
            break

        values, lam = _unpack(x, grid, n)
        J = jacobian(model, problem, Curve(grid, values), lam)
        factors, condition = _factor(J, config.cond_threshold)
        step = lu_solve(factors, R, check_finite=False)

        t = 1.0
        best = (np.inf, None, None)
        for _ in range(config.max_backtracks + 1):
            trial = x - t * step
            trial_norm, trial_R = _trial_residual(model, problem, grid, n, trial)
            if trial_norm < best[0]:
                best = (trial_norm, trial, trial_R)
            if trial_norm <= (1.0 - ARMIJO_SLOPE * t) * norm:
                break
            t *= config.damping_factor
        trial_norm, trial, trial_R = best
        if trial is None or trial_norm >= norm:
            raise NewtonDiverged(
                f"line search stalled at h={problem.h:.6g} (residual {norm:.3e})",
                iterations=iteration,
                residual_norm=norm,
            )

        x, R, norm = trial, trial_R, trial_norm
        peak = float(np.max(np.abs(_unpack(x, grid, n)[0])))
        if peak > config.v_max:
            raise NewtonDiverged(
                f"velocity iterate left the bound v_max={config.v_max:.3g} (|V|={peak:.3g})",
                iterations=iteration + 1,
                residual_norm=norm,
            )

    raise NewtonDiverged(
        f"Newton did not converge in {config.max_iter} iterations at h={problem.h:.6g} "
        f"(residual {norm:.3e})",
        iterations=config.max_iter,
        residual_norm=norm,
    )


def solve_regularized(
    model: LagrangianModel,
    q1,
    z,
    h_target: float,
    config: Optional[SolverConfig] = None,
    guess: Optional[Tuple[Curve, np.ndarray]] = None,
) -> BvpSolution:
    """
    Solve the regularized problem at h_target by continuation from h = 0.

    The h = 0 solution is exact: V = z, lambda = dL/dv(q1, z). The interval
    [0, h_target] is walked in `continuation_steps` increments, warm
    starting Newton each time; a failed increment is halved, at most
    `max_bisections` deep. With `guess`, Newton is first tried directly at
    h_target and continuation is the fallback.
    """
    config = (config or SolverConfig()).validate()
    problem = RegularizedProblem(q1, z, h_target)
    if problem.dim != model.dim:
        raise InvalidConfig(f"{model.name} has dimension {model.dim}, problem has {problem.dim}")
    regularity_check(model, problem.q1, problem.z, config.cond_threshold)
    grid = make_grid(config.N)

    if guess is not None and problem.h > 0:
        guess_V, guess_lambda = guess
        if guess_V.grid == grid:
            try:
                return newton(model, problem, guess_V, guess_lambda, config)
            except (NewtonDiverged, NonRegularLagrangian, DomainError) as e:
                logger.debug(f"Warm start rejected at h={problem.h:.6g}: {e}")

    start = newton(
        model,
        problem.at(0.0),
        Curve.constant(grid, problem.z),
        legendre(model, problem.q1, problem.z),
        config,
    )
    if problem.h == 0.0:
        return start

    base_step = problem.h / config.continuation_steps
    step = base_step
    depth = 0
    h_now = 0.0
    solution = start
    total_iterations = 0
    streak = 0

    while h_now < problem.h:
        h_next = h_now + step
        if h_next >= problem.h or problem.h - h_next <= 1e-12 * problem.h:
            h_next = problem.h
        try:
            solution = newton(model, problem.at(h_next), solution.V, solution.lam, config)
        except (NewtonDiverged, NonRegularLagrangian, DomainError) as e:
            depth += 1
            if depth > config.max_bisections:
                logger.debug(f"Continuation exhausted at h={h_now:.6g}: {e}")
                if isinstance(e, NonRegularLagrangian):
                    raise
                raise NewtonDiverged(
                    f"continuation failed beyond h={h_now:.6g} after {config.max_bisections} "
                    f"bisections: {e}",
                    iterations=total_iterations,
                    residual_norm=getattr(e, "residual_norm", None),
                ) from e
            step *= 0.5
            streak = 0
            logger.warning(f"Newton failed at h={h_next:.6g}, halving increment to {step:.3g}")
            continue

        total_iterations += solution.iterations
        h_now = h_next
        streak += 1
        if streak >= 2 and step < base_step:
            step = min(2.0 * step, base_step)
            depth = max(depth - 1, 0)
            streak = 0

    logger.debug(
        f"{model.name}: solved h={problem.h:.6g} in {total_iterations} Newton iterations, "
        f"condition {solution.condition_estimate:.3g}"
    )
    return BvpSolution(
        problem=solution.problem,
        V=solution.V,
        lam=solution.lam,
        Q=solution.Q,
        residual_norm=solution.residual_norm,
        iterations=total_iterations,
        condition_estimate=solution.condition_estimate,
        p_start=solution.p_start,
        p_end=solution.p_end,
    )


def trajectory_from_solution(model: LagrangianModel, solution: BvpSolution) -> Trajectory:
    """
    Physical trajectory t_i = h*u_i, q = Q_i, v = V_i.

    The two boundary velocities are recovered from the boundary momenta by
    the inverse Legendre transform.
    """
    problem = solution.problem
    velocities = np.array(solution.V.values)
    positions = solution.Q.values
    velocities[0] = legendre_inverse(model, positions[0], solution.p_start)
    velocities[-1] = legendre_inverse(model, positions[-1], solution.p_end)
    return Trajectory(
        times=problem.h * solution.V.grid.nodes,
        positions=np.array(positions),
        velocities=velocities,
        h=problem.h,
    )


def solve_bvp(
    model: LagrangianModel,
    q1,
    q2,
    h: float,
    config: Optional[SolverConfig] = None,
    guess: Optional[Tuple[Curve, np.ndarray]] = None,
) -> Tuple[BvpSolution, Trajectory]:
    """Connect q1 to q2 in time h > 0; returns the solution and its trajectory."""
    if not (np.isfinite(h) and h > 0):
        raise InvalidConfig(f"h must be positive, got {h}")
    q1 = np.atleast_1d(np.asarray(q1, dtype=float))
    q2 = np.atleast_1d(np.asarray(q2, dtype=float))
    if not (model.in_domain(q1, np.zeros_like(q1)) and model.in_domain(q2, np.zeros_like(q2))):
        raise DomainError(f"{model.name}: endpoints outside the model domain")
    z = (q2 - q1) / h
    solution = solve_regularized(model, q1, z, h, config, guess=guess)
    trajectory = trajectory_from_solution(model, solution)
    logger.info(
        f"{model.name}: BVP solved (h={h:.6g}, N={solution.V.grid.N}, "
        f"residual {solution.residual_norm:.2e}, iterations {solution.iterations})"
    )
    return solution, trajectory
