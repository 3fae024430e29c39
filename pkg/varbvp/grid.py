"""
Discrete calculus on the unit interval.

Uniform grids, composite trapezoid quadrature, running integrals from either
end, the weak (trapezoid) inner product and the projection onto mean-zero
curves. All sums run left to right so that `quad` and the last node of
`cumulative` are bit-identical.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from varbvp.errors import GridMismatch, InvalidConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    """Uniform grid u_i = i/N, i = 0..N."""

    N: int

    @property
    def du(self) -> float:
        return 1.0 / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.N + 1) / self.N

    @property
    def size(self) -> int:
        return self.N + 1


@dataclass(frozen=True, eq=False)
class Curve:
    """Node values (N+1, n) of a curve on a grid. Values are read-only."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != self.grid.size:
            raise GridMismatch(
                f"curve needs {self.grid.size} node values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidConfig("curve values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def constant(cls, grid: Grid, value) -> "Curve":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(value, (grid.size, 1)))

    @classmethod
    def sample(cls, grid: Grid, func: Callable[[np.ndarray], np.ndarray]) -> "Curve":
        """Sample func(u) at the nodes; func is applied to the node array."""
        return cls(grid, np.asarray(func(grid.nodes), dtype=float))


def make_grid(N: int) -> Grid:
    """Uniform grid with N subintervals; N must be an integer >= 2."""
    if isinstance(N, bool) or int(N) != N or N < 2:
        raise InvalidConfig(f"grid needs an integer N >= 2, got {N}")
    return Grid(int(N))


def _running_trapezoid(values: np.ndarray, du: float) -> np.ndarray:
    segments = 0.5 * du * (values[:-1] + values[1:])
    out = np.zeros_like(values)
    np.cumsum(segments, axis=0, out=out[1:])
    return out


def cumulative(curve: Curve) -> Curve:
    """Node values of the running integral from 0; first node is 0."""
    return Curve(curve.grid, _running_trapezoid(curve.values, curve.grid.du))


def quad(curve: Curve) -> np.ndarray:
    """Composite trapezoid integral over [0, 1]."""
    return _running_trapezoid(curve.values, curve.grid.du)[-1].copy()


def tail(curve: Curve) -> Curve:
    """Node values of the integral from u to 1, as total minus running sum."""
    running = _running_trapezoid(curve.values, curve.grid.du)
    return Curve(curve.grid, running[-1] - running)


def cumulative_adjoint(curve: Curve) -> Curve:
    """
    Transpose of `cumulative` under the trapezoid pairing:
    <<cumulative(a), b>> = <<a, cumulative_adjoint(b)>> for all node curves.

    Equals `tail` at interior nodes; the end nodes differ by -du/2*f_0 and
    +du/2*f_N.
    """
    du = curve.grid.du
    values = np.array(tail(curve).values)
    values[0] -= 0.5 * du * curve.values[0]
    values[-1] += 0.5 * du * curve.values[-1]
    return Curve(curve.grid, values)


def _check_same(a: Curve, b: Curve) -> None:
    if a.grid != b.grid:
        raise GridMismatch(f"grids differ (N={a.grid.N} vs N={b.grid.N})")
    if a.dim != b.dim:
        raise GridMismatch(f"dimensions differ ({a.dim} vs {b.dim})")


def inner_product(a: Curve, b: Curve) -> float:
    """Weak inner product <<a, b>> = trapezoid integral of a . b."""
    _check_same(a, b)
    pointwise = np.sum(a.values * b.values, axis=1)
    return float(_running_trapezoid(pointwise, a.grid.du)[-1])


def mean_project(curve: Curve) -> Curve:
    """Orthogonal projection onto mean-zero curves: subtract quad(curve) everywhere."""
    return Curve(curve.grid, curve.values - quad(curve))


# ============================================================================
# MATRIX FORMS (used to assemble Newton matrices)
# ============================================================================

def trapezoid_weights(grid: Grid) -> np.ndarray:
    """Weights w with quad(f) = sum_i w_i f_i."""
    w = np.full(grid.size, grid.du)
    w[0] = w[-1] = 0.5 * grid.du
    return w


@lru_cache(maxsize=16)
def cumulative_matrix(grid: Grid) -> np.ndarray:
    """C with cumulative(f)_i = sum_j C[i, j] f_j (read-only, cached per grid)."""
    size = grid.size
    strictly_lower = np.tril(np.ones((size, size)), -1)
    lower_from_one = np.tril(np.ones((size, size)))
    lower_from_one[:, 0] = 0.0
    matrix = 0.5 * grid.du * (strictly_lower + lower_from_one)
    matrix.flags.writeable = False
    return matrix


@lru_cache(maxsize=16)
def cumulative_adjoint_matrix(grid: Grid) -> np.ndarray:
    """A = W^-1 C^T W, the matrix of `cumulative_adjoint` (read-only, cached per grid)."""
    w = trapezoid_weights(grid)
    matrix = (cumulative_matrix(grid).T * w[None, :]) / w[:, None]
    matrix.flags.writeable = False
    return matrix
