"""
Lagrangian models for the variational boundary value solver.

A model is a dimension n plus pure evaluators for L, dL/dq, dL/dv and
(optionally) the second-derivative blocks. Evaluators are vectorised: q and
v have shape (..., n), so a whole curve is evaluated in one call.

Mixed-block convention: d2Ldqdv[..., a, b] = d(dL/dv_a)/dq_b, so that
d/dt[dL/dv] = d2Ldqdv @ v + d2Ldv2 @ a along a curve.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional

import numpy as np

from varbvp.config import DEFAULT_COND_THRESHOLD, FD_RELATIVE_STEP, LEGENDRE_MAX_ITER
from varbvp.errors import DomainError, InvalidConfig, NewtonDiverged, NonRegularLagrangian

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LagrangianJet:
    """L and its first partials at one or many points."""

    L: np.ndarray
    dLdq: np.ndarray
    dLdv: np.ndarray


@dataclass(frozen=True)
class HessianBlocks:
    """Second partials; each block has shape (..., n, n)."""

    d2Ldv2: np.ndarray
    d2Ldqdv: np.ndarray
    d2Ldq2: np.ndarray


JetEvaluator = Callable[[np.ndarray, np.ndarray], LagrangianJet]
HessianEvaluator = Callable[[np.ndarray, np.ndarray], HessianBlocks]
DomainPredicate = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LagrangianModel:
    """
    An autonomous Lagrangian on an open subset of R^n x R^n.

    `domain`, when given, returns a boolean (array) telling which points
    belong to the model's domain; the default domain is everything.
    """

    dim: int
    name: str
    value_and_first_derivatives: JetEvaluator
    second_derivatives: Optional[HessianEvaluator] = None
    parameters: Mapping[str, float] = field(default_factory=dict)
    domain: Optional[DomainPredicate] = None

    def in_domain(self, q: np.ndarray, v: np.ndarray) -> bool:
        """True when every given point lies in the domain."""
        if self.domain is None:
            return True
        return bool(np.all(self.domain(q, v)))


def _check_points(model: LagrangianModel, q, v):
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    if q.shape[-1:] != (model.dim,) or v.shape[-1:] != (model.dim,):
        raise InvalidConfig(
            f"{model.name}: expected points with {model.dim} components, "
            f"got q{q.shape} and v{v.shape}"
        )
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
        raise DomainError(f"{model.name}: non-finite point")
    q, v = np.broadcast_arrays(q, v)
    if not model.in_domain(q, v):
        raise DomainError(f"{model.name}: point outside the model domain")
    return q, v


def evaluate(model: LagrangianModel, q, v) -> LagrangianJet:
    """Evaluate (L, dL/dq, dL/dv) at (q, v); raises DomainError off-domain."""
    q, v = _check_points(model, q, v)
    return model.value_and_first_derivatives(q, v)


def _fd_second_derivatives(model: LagrangianModel, q, v, fd_step: float) -> HessianBlocks:
    n = model.dim
    batch = q.shape[:-1]
    d2Ldv2 = np.empty(batch + (n, n))
    d2Ldqdv = np.empty(batch + (n, n))
    d2Ldq2 = np.empty(batch + (n, n))
    first = model.value_and_first_derivatives

    for b in range(n):
        dv = np.zeros_like(v)
        dv[..., b] = fd_step * (1.0 + np.abs(v[..., b]))
        plus, minus = first(q, v + dv), first(q, v - dv)
        width = 2.0 * dv[..., b : b + 1]
        d2Ldv2[..., :, b] = (plus.dLdv - minus.dLdv) / width

        dq = np.zeros_like(q)
        dq[..., b] = fd_step * (1.0 + np.abs(q[..., b]))
        plus, minus = first(q + dq, v), first(q - dq, v)
        width = 2.0 * dq[..., b : b + 1]
        d2Ldqdv[..., :, b] = (plus.dLdv - minus.dLdv) / width
        d2Ldq2[..., :, b] = (plus.dLdq - minus.dLdq) / width

    # symmetric parts of the pure blocks
    d2Ldv2 = 0.5 * (d2Ldv2 + np.swapaxes(d2Ldv2, -1, -2))
    d2Ldq2 = 0.5 * (d2Ldq2 + np.swapaxes(d2Ldq2, -1, -2))
    return HessianBlocks(d2Ldv2=d2Ldv2, d2Ldqdv=d2Ldqdv, d2Ldq2=d2Ldq2)


def second_derivatives(
    model: LagrangianModel, q, v, fd_step: float = FD_RELATIVE_STEP
) -> HessianBlocks:
    """
    Second-derivative blocks at (q, v).

    Uses the model's analytic evaluator when present, otherwise central
    differences of the first derivatives with step fd_step*(1+|component|).
    """
    if fd_step <= 0:
        raise InvalidConfig(f"fd_step must be positive, got {fd_step}")
    q, v = _check_points(model, q, v)
    if model.second_derivatives is not None:
        return model.second_derivatives(q, v)
    return _fd_second_derivatives(model, q, v, fd_step)


def regularity_check(
    model: LagrangianModel, q, v, cond_threshold: float = DEFAULT_COND_THRESHOLD
) -> float:
    """
    Condition estimate of d2L/dv2 at (q, v) (largest over a batch).

    Raises NonRegularLagrangian when the block is singular or the estimate
    exceeds cond_threshold.
    """
    if not cond_threshold > 1:
        raise InvalidConfig(f"cond_threshold must exceed 1, got {cond_threshold}")
    hvv = second_derivatives(model, q, v).d2Ldv2
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = float(np.max(np.linalg.cond(hvv)))
    if not np.isfinite(cond) or cond > cond_threshold:
        raise NonRegularLagrangian(
            f"{model.name}: d2L/dv2 is not invertible at the given point "
            f"(condition estimate {cond:.3g}, threshold {cond_threshold:.3g})",
            condition_estimate=cond,
        )
    return cond


def energy(model: LagrangianModel, q, v) -> np.ndarray:
    """E = dL/dv . v - L."""
    q, v = _check_points(model, q, v)
    jet = model.value_and_first_derivatives(q, v)
    return np.sum(jet.dLdv * v, axis=-1) - jet.L


def legendre(model: LagrangianModel, q, v) -> np.ndarray:
    """Momentum p = dL/dv(q, v)."""
    return evaluate(model, q, v).dLdv


def legendre_inverse(model: LagrangianModel, q, p, tol: float = 1e-12) -> np.ndarray:
    """
    Solve dL/dv(q, v) = p for v by Newton iteration from v = 0.

    Raises NonRegularLagrangian on a singular velocity Hessian and
    NewtonDiverged if the tolerance is not reached.
    """
    if tol <= 0:
        raise InvalidConfig(f"tol must be positive, got {tol}")
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    v = np.zeros(model.dim)
    residual = np.inf

    for iteration in range(LEGENDRE_MAX_ITER + 1):
        r = legendre(model, q, v) - p
        residual = float(np.max(np.abs(r)))
        if residual <= tol:
            logger.debug(f"{model.name}: Legendre inverse converged in {iteration} iterations")
            return v
        hvv = second_derivatives(model, q, v).d2Ldv2
        try:
            step = np.linalg.solve(hvv, r)
        except np.linalg.LinAlgError as e:
            raise NonRegularLagrangian(
                f"{model.name}: singular d2L/dv2 while inverting the Legendre transform"
            ) from e
        if not np.all(np.isfinite(step)):
            raise NonRegularLagrangian(f"{model.name}: non-finite Legendre Newton step")
        v = v - step

    raise NewtonDiverged(
        f"{model.name}: Legendre inverse did not converge in {LEGENDRE_MAX_ITER} iterations",
        iterations=LEGENDRE_MAX_ITER,
        residual_norm=residual,
    )


# ============================================================================
# BUILT-IN CATALOG
# ============================================================================

def _eye(v: np.ndarray, scale=1.0) -> np.ndarray:
    n = v.shape[-1]
    return np.asarray(scale)[..., None, None] * np.broadcast_to(np.eye(n), v.shape[:-1] + (n, n))


def _zeros_block(v: np.ndarray) -> np.ndarray:
    n = v.shape[-1]
    return np.zeros(v.shape[:-1] + (n, n))


def _quadratic_family(name, dim, params, mass, stiffness):
    """L = m/2 |v|^2 - k/2 |q|^2 (free particle and Euclidean metric when k = 0)."""

    def first(q, v):
        return LagrangianJet(
            L=0.5 * mass * np.sum(v * v, axis=-1) - 0.5 * stiffness * np.sum(q * q, axis=-1),
            dLdq=-stiffness * q,
            dLdv=mass * v,
        )

    def second(q, v):
        return HessianBlocks(
            d2Ldv2=_eye(v, mass),
            d2Ldqdv=_zeros_block(v),
            d2Ldq2=_eye(v, -stiffness),
        )

    return LagrangianModel(dim, name, first, second, dict(params))


def _build_free(dim, params):
    return _quadratic_family("free", dim, params, params["mass"], 0.0)


def _build_harmonic(dim, params):
    m, omega = params["mass"], params["omega"]
    return _quadratic_family("harmonic", dim, params, m, m * omega**2)


def _build_euclidean_metric(dim, params):
    return _quadratic_family("euclidean_metric", dim, params, params["scale"], 0.0)


def _build_pendulum(dim, params):
    w2 = params["omega"] ** 2

    def first(q, v):
        return LagrangianJet(
            L=0.5 * np.sum(v * v, axis=-1) + w2 * np.sum(np.cos(q), axis=-1),
            dLdq=-w2 * np.sin(q),
            dLdv=v.copy(),
        )

    def second(q, v):
        hqq = _zeros_block(q)
        idx = np.arange(q.shape[-1])
        hqq[..., idx, idx] = -w2 * np.cos(q)
        return HessianBlocks(d2Ldv2=_eye(v), d2Ldqdv=_zeros_block(v), d2Ldq2=hqq)

    return LagrangianModel(dim, "pendulum", first, second, dict(params))


def _build_double_well(dim, params):
    alpha = params["alpha"]

    def first(q, v):
        return LagrangianJet(
            L=0.5 * np.sum(v * v, axis=-1) - alpha * np.sum((q * q - 1.0) ** 2, axis=-1),
            dLdq=-4.0 * alpha * q * (q * q - 1.0),
            dLdv=v.copy(),
        )

    def second(q, v):
        hqq = _zeros_block(q)
        idx = np.arange(q.shape[-1])
        hqq[..., idx, idx] = -4.0 * alpha * (3.0 * q * q - 1.0)
        return HessianBlocks(d2Ldv2=_eye(v), d2Ldqdv=_zeros_block(v), d2Ldq2=hqq)

    return LagrangianModel(dim, "double_well", first, second, dict(params))


def _build_halfplane_metric(dim, params):
    """Poincare half-plane, L = |v|^2 / (2 y^2) on y > 0."""

    def first(q, v):
        y = q[..., 1]
        speed2 = np.sum(v * v, axis=-1)
        dLdq = np.zeros_like(v)
        dLdq[..., 1] = -speed2 / y**3
        return LagrangianJet(L=0.5 * speed2 / y**2, dLdq=dLdq, dLdv=v / q[..., 1:2] ** 2)

    def second(q, v):
        y = q[..., 1]
        hqv = _zeros_block(v)
        hqv[..., :, 1] = -2.0 * v / q[..., 1:2] ** 3
        hqq = _zeros_block(v)
        hqq[..., 1, 1] = 3.0 * np.sum(v * v, axis=-1) / y**4
        return HessianBlocks(d2Ldv2=_eye(v, 1.0 / y**2), d2Ldqdv=hqv, d2Ldq2=hqq)

    def domain(q, v):
        return q[..., 1] > 0

    return LagrangianModel(dim, "halfplane_metric", first, second, dict(params), domain)


def _build_sphere_chart_metric(dim, params):
    """Round sphere of radius R in (polar, azimuth) coordinates on 0 < polar < pi."""
    r2 = params["radius"] ** 2

    def first(q, v):
        theta = q[..., 0]
        s, c = np.sin(theta), np.cos(theta)
        dtheta, dphi = v[..., 0], v[..., 1]
        dLdq = np.zeros_like(v)
        dLdq[..., 0] = r2 * s * c * dphi**2
        dLdv = np.stack([r2 * dtheta, r2 * s**2 * dphi], axis=-1)
        return LagrangianJet(L=0.5 * r2 * (dtheta**2 + s**2 * dphi**2), dLdq=dLdq, dLdv=dLdv)

    def second(q, v):
        theta = q[..., 0]
        s = np.sin(theta)
        dphi = v[..., 1]
        hvv = _zeros_block(v)
        hvv[..., 0, 0] = r2
        hvv[..., 1, 1] = r2 * s**2
        hqv = _zeros_block(v)
        hqv[..., 1, 0] = r2 * np.sin(2.0 * theta) * dphi
        hqq = _zeros_block(v)
        hqq[..., 0, 0] = r2 * np.cos(2.0 * theta) * dphi**2
        return HessianBlocks(d2Ldv2=hvv, d2Ldqdv=hqv, d2Ldq2=hqq)

    def domain(q, v):
        return (q[..., 0] > 0) & (q[..., 0] < np.pi)

    return LagrangianModel(dim, "sphere_chart_metric", first, second, dict(params), domain)


def _build_quartic(dim, params):
    """L = sum v_a^4 / 4; singular velocity Hessian at v = 0."""

    def first(q, v):
        return LagrangianJet(L=0.25 * np.sum(v**4, axis=-1), dLdq=np.zeros_like(v), dLdv=v**3)

    def second(q, v):
        hvv = _zeros_block(v)
        idx = np.arange(v.shape[-1])
        hvv[..., idx, idx] = 3.0 * v**2
        return HessianBlocks(d2Ldv2=hvv, d2Ldqdv=_zeros_block(v), d2Ldq2=_zeros_block(v))

    return LagrangianModel(dim, "quartic", first, second, dict(params))


# name -> (builder, default parameters, default dim, fixed dim)
BUILTIN_CATALOG: Dict[str, tuple] = {
    "free": (_build_free, {"mass": 1.0}, 1, False),
    "harmonic": (_build_harmonic, {"omega": 1.0, "mass": 1.0}, 1, False),
    "pendulum": (_build_pendulum, {"omega": 1.0}, 1, True),
    "double_well": (_build_double_well, {"alpha": 1.0}, 1, True),
    "euclidean_metric": (_build_euclidean_metric, {"scale": 1.0}, 2, False),
    "halfplane_metric": (_build_halfplane_metric, {}, 2, True),
    "sphere_chart_metric": (_build_sphere_chart_metric, {"radius": 1.0}, 2, True),
    "quartic": (_build_quartic, {}, 1, False),
}

# parameters that must be strictly positive
_POSITIVE_PARAMETERS = {"mass", "scale", "radius"}

REGULAR_BUILTINS = (
    "free",
    "harmonic",
    "pendulum",
    "double_well",
    "euclidean_metric",
    "halfplane_metric",
    "sphere_chart_metric",
)


def make_builtin(
    name: str, parameters: Optional[Mapping[str, float]] = None, dim: Optional[int] = None
) -> LagrangianModel:
    """
    Build a catalog model with analytic first and second derivatives.

    Raises InvalidConfig for an unknown name, unknown or invalid parameter
    keys, or a dimension the family does not support.
    """
    if name not in BUILTIN_CATALOG:
        raise InvalidConfig(
            f"unknown model '{name}' (choose from {', '.join(sorted(BUILTIN_CATALOG))})"
        )
    builder, defaults, default_dim, fixed_dim = BUILTIN_CATALOG[name]

    parameters = dict(parameters or {})
    unknown = sorted(set(parameters) - set(defaults))
    if unknown:
        raise InvalidConfig(f"model '{name}' has no parameters {', '.join(unknown)}")

    values = dict(defaults)
    for key, raw in parameters.items():
        try:
            value = float(raw)
        except (TypeError, ValueError) as e:
            raise InvalidConfig(f"parameter '{key}' must be a real number, got {raw!r}") from e
        if not np.isfinite(value):
            raise InvalidConfig(f"parameter '{key}' must be finite")
        if key in _POSITIVE_PARAMETERS and value <= 0:
            raise InvalidConfig(f"parameter '{key}' must be positive, got {value}")
        values[key] = value

    if dim is None:
        dim = default_dim
    if int(dim) != dim or dim < 1:
        raise InvalidConfig(f"dimension must be a positive integer, got {dim}")
    if fixed_dim and dim != default_dim:
        raise InvalidConfig(f"model '{name}' is only defined for n={default_dim}")

    model = builder(int(dim), values)
    logger.debug(f"Built model {name} (n={model.dim}, parameters={values})")
    return model


def make_custom(
    name: str,
    dim: int,
    value_and_first_derivatives: JetEvaluator,
    second_derivatives: Optional[HessianEvaluator] = None,
    domain: Optional[DomainPredicate] = None,
    parameters: Optional[Mapping[str, float]] = None,
) -> LagrangianModel:
    """Register a user model; second derivatives fall back to finite differences."""
    if int(dim) != dim or dim < 1:
        raise InvalidConfig(f"dimension must be a positive integer, got {dim}")
    return LagrangianModel(
        dim=int(dim),
        name=name,
        value_and_first_derivatives=value_and_first_derivatives,
        second_derivatives=second_derivatives,
        parameters=dict(parameters or {}),
        domain=domain,
    )
