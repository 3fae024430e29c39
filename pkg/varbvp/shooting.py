"""
Shooting oracle: Euler-Lagrange acceleration, classical RK4 and single
shooting. An independent discretisation used to cross-check the
regularized solver.
"""

import logging
from typing import Optional

import numpy as np

from varbvp.config import SHOOTING_MAX_ITER, SHOOTING_STEPS, SHOOTING_TOLERANCE
from varbvp.errors import InvalidConfig, NewtonDiverged, NonRegularLagrangian
from varbvp.lagrangians import LagrangianModel, evaluate, second_derivatives
from varbvp.solver import Trajectory
from varbvp.utils import fd_steps

logger = logging.getLogger(__name__)


def el_acceleration(model: LagrangianModel, q, v) -> np.ndarray:
    """
    Solve d2L/dv2 a = dL/dq - d2Ldqdv v, the chart form of
    d/dt[dL/dv] = dL/dq. Works on single points or batches.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    jet = evaluate(model, q, v)
    blocks = second_derivatives(model, q, v)
    rhs = jet.dLdq - np.einsum("...ab,...b->...a", blocks.d2Ldqdv, v)
    try:
        return np.linalg.solve(blocks.d2Ldv2, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as e:
        raise NonRegularLagrangian(f"{model.name}: singular d2L/dv2 in the acceleration") from e


def rk4_flow(model: LagrangianModel, q0, v0, T: float, steps: int) -> Trajectory:
    """Classical fourth-order Runge-Kutta on (q, v) over [0, T]."""
    if int(steps) != steps or steps < 1:
        raise InvalidConfig(f"steps must be a positive integer, got {steps}")
    if not T > 0:
        raise InvalidConfig(f"T must be positive, got {T}")
    steps = int(steps)
    dt = T / steps
    q = np.atleast_1d(np.asarray(q0, dtype=float)).copy()
    v = np.atleast_1d(np.asarray(v0, dtype=float)).copy()

    positions = np.empty((steps + 1, q.shape[0]))
    velocities = np.empty_like(positions)
    positions[0], velocities[0] = q, v

    def accel(qq, vv):
        return el_acceleration(model, qq, vv)

    for k in range(steps):
        k1q, k1v = v, accel(q, v)
        k2q, k2v = v + 0.5 * dt * k1v, accel(q + 0.5 * dt * k1q, v + 0.5 * dt * k1v)
        k3q, k3v = v + 0.5 * dt * k2v, accel(q + 0.5 * dt * k2q, v + 0.5 * dt * k2v)
        k4q, k4v = v + dt * k3v, accel(q + dt * k3q, v + dt * k3v)
        q = q + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        v = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        positions[k + 1], velocities[k + 1] = q, v

    times = np.linspace(0.0, T, steps + 1)
    return Trajectory(times=times, positions=positions, velocities=velocities, h=T)


def shoot_bvp(
    model: LagrangianModel,
    q1,
    q2,
    h: float,
    tol: float = SHOOTING_TOLERANCE,
    steps: int = SHOOTING_STEPS,
    v_guess: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Initial velocity v0 with |q(h; v0) - q2| <= tol, by Newton on the RK4
    endpoint map with a central-difference sensitivity.
    """
    if not h > 0:
        raise InvalidConfig(f"h must be positive, got {h}")
    q1 = np.atleast_1d(np.asarray(q1, dtype=float))
    q2 = np.atleast_1d(np.asarray(q2, dtype=float))
    v0 = (q2 - q1) / h if v_guess is None else np.atleast_1d(np.asarray(v_guess, dtype=float))
    n = q1.shape[0]

    def miss(v):
        return rk4_flow(model, q1, v, h, steps).positions[-1] - q2

    error = miss(v0)
    for iteration in range(SHOOTING_MAX_ITER):
        norm = float(np.max(np.abs(error)))
        logger.debug(f"shooting iter {iteration}: miss {norm:.3e}")
        if norm <= tol:
            return v0
        sensitivity = np.empty((n, n))
        deltas = fd_steps(v0)
        for b in range(n):
            dv = np.zeros(n)
            dv[b] = deltas[b]
            sensitivity[:, b] = (miss(v0 + dv) - miss(v0 - dv)) / (2.0 * deltas[b])
        try:
            v0 = v0 - np.linalg.solve(sensitivity, error)
        except np.linalg.LinAlgError as e:
            raise NewtonDiverged(
                "shooting sensitivity is singular (conjugate point?)",
                iterations=iteration,
                residual_norm=norm,
            ) from e
        error = miss(v0)

    norm = float(np.max(np.abs(error)))
    if norm <= tol:
        return v0
    raise NewtonDiverged(
        f"shooting did not converge in {SHOOTING_MAX_ITER} iterations (miss {norm:.3e})",
        iterations=SHOOTING_MAX_ITER,
        residual_norm=norm,
    )
