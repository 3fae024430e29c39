"""
Tests for the shooting oracle and its agreement with the variational solver.
"""

import numpy as np
import pytest

from varbvp.config import SolverConfig
from varbvp.errors import InvalidConfig, NonRegularLagrangian
from varbvp.lagrangians import energy, make_builtin
from varbvp.shooting import el_acceleration, rk4_flow, shoot_bvp
from varbvp.solver import solve_bvp


class TestElAcceleration:
    """Tests for the Euler-Lagrange acceleration field."""

    def test_free_particle(self):
        np.testing.assert_array_equal(el_acceleration(make_builtin("free"), [0.3], [1.0]), [0.0])

    def test_oscillator(self):
        np.testing.assert_allclose(el_acceleration(make_builtin("harmonic"), [1.0], [0.0]), [-1.0])

    def test_halfplane_vertical_geodesic(self):
        a = el_acceleration(make_builtin("halfplane_metric"), [0.0, 1.0], [0.0, 1.0])
        np.testing.assert_allclose(a, [0.0, 1.0], atol=1e-15)

    def test_batched_points(self):
        q = np.array([[0.0], [0.5], [1.0]])
        a = el_acceleration(make_builtin("pendulum"), q, np.zeros_like(q))
        np.testing.assert_allclose(a[:, 0], -np.sin(q[:, 0]))

    def test_singular_hessian(self):
        with pytest.raises(NonRegularLagrangian):
            el_acceleration(make_builtin("quartic"), [0.0], [0.0])


class TestRk4Flow:
    """Tests for the classical Runge-Kutta integrator."""

    def test_oscillator_quarter_period(self):
        traj = rk4_flow(make_builtin("harmonic"), [0.0], [1.0], np.pi / 2, 1000)
        assert traj.positions[-1, 0] == pytest.approx(1.0, abs=1e-10)
        assert traj.velocities[-1, 0] == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize("steps", [1, 7, 50])
    def test_free_particle_exact(self, steps):
        traj = rk4_flow(make_builtin("free"), [0.0], [1.0], 1.0, steps)
        assert traj.positions[-1, 0] == pytest.approx(1.0, abs=1e-14)
        assert traj.velocities[-1, 0] == 1.0
        assert traj.times.shape == (steps + 1,)

    def test_pendulum_energy_conserved(self):
        model = make_builtin("pendulum")
        traj = rk4_flow(model, [1.0], [0.0], 10.0, 10_000)
        E = energy(model, traj.positions, traj.velocities)
        assert np.max(np.abs(E - E[0])) <= 1e-9

    def test_oscillator_energy_conserved(self):
        model = make_builtin("harmonic")
        traj = rk4_flow(model, [0.0], [1.0], 10.0, 10_000)
        E = energy(model, traj.positions, traj.velocities)
        assert np.max(np.abs(E - E[0])) <= 1e-8

    def test_fourth_order(self):
        model = make_builtin("harmonic")
        errors = [
            abs(rk4_flow(model, [0.0], [1.0], 2.0, steps).positions[-1, 0] - np.sin(2.0))
            for steps in (20, 40, 80)
        ]
        ratios = [a / b for a, b in zip(errors, errors[1:])]
        assert all(12.0 <= r <= 20.0 for r in ratios), ratios

    def test_rejects_bad_arguments(self):
        with pytest.raises(InvalidConfig):
            rk4_flow(make_builtin("free"), [0.0], [1.0], 1.0, 0)
        with pytest.raises(InvalidConfig):
            rk4_flow(make_builtin("free"), [0.0], [1.0], -1.0, 10)


class TestShootBvp:
    """Tests for single shooting."""

    def test_free_particle(self):
        np.testing.assert_allclose(shoot_bvp(make_builtin("free"), [0.0], [1.0], 1.0), [1.0], atol=1e-10)

    def test_oscillator_quarter_period(self):
        v0 = shoot_bvp(make_builtin("harmonic"), [0.0], [1.0], np.pi / 2)
        assert v0[0] == pytest.approx(1.0, abs=1e-6)

    def test_agrees_with_variational_solver(self):
        model = make_builtin("pendulum")
        v0 = shoot_bvp(model, [0.0], [0.5], 0.5)
        _, traj = solve_bvp(model, [0.0], [0.5], 0.5, SolverConfig(N=64))
        assert traj.velocities[0, 0] == pytest.approx(v0[0], abs=1e-4)

    def test_oracle_equivalence_on_random_instances(self):
        rng = np.random.default_rng(8)
        config = SolverConfig(N=200)
        for k in range(20):
            model = make_builtin("pendulum" if k % 2 else "harmonic")
            q1 = rng.uniform(-1.0, 1.0, 1)
            h = rng.uniform(0.2, 0.8)
            q2 = q1 + h * rng.uniform(-1.5, 1.5, 1)
            v_shoot = shoot_bvp(model, q1, q2, h, steps=200)
            _, traj = solve_bvp(model, q1, q2, h, config)
            np.testing.assert_allclose(traj.velocities[0], v_shoot, atol=1e-4)

    def test_non_positive_h_rejected(self):
        with pytest.raises(InvalidConfig):
            shoot_bvp(make_builtin("free"), [0.0], [1.0], 0.0)

