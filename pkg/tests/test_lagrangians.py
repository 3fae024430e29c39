"""
Tests for Lagrangian models: the built-in catalog, derivatives, regularity
and the Legendre transform.
"""

import numpy as np
import pytest

from varbvp.errors import DomainError, InvalidConfig, NonRegularLagrangian
from varbvp.lagrangians import (
    BUILTIN_CATALOG,
    REGULAR_BUILTINS,
    LagrangianJet,
    energy,
    evaluate,
    legendre,
    legendre_inverse,
    make_builtin,
    make_custom,
    regularity_check,
    second_derivatives,
)
from varbvp.utils import fd_steps


def sample_points(name, dim, rng, count):
    """Random (q, v) batches inside each model's domain."""
    q = rng.uniform(-1.5, 1.5, (count, dim))
    v = rng.uniform(-1.5, 1.5, (count, dim))
    if name == "halfplane_metric":
        q[:, 1] = rng.uniform(0.5, 2.0, count)
    if name == "sphere_chart_metric":
        q[:, 0] = rng.uniform(0.5, 2.6, count)
    return q, v


class TestMakeBuiltin:
    """Tests for catalog construction."""

    def test_unknown_model_rejected(self):
        with pytest.raises(InvalidConfig):
            make_builtin("kepler")

    def test_unknown_parameter_rejected(self):
        with pytest.raises(InvalidConfig):
            make_builtin("harmonic", {"stiffness": 2.0})

    def test_non_positive_mass_rejected(self):
        with pytest.raises(InvalidConfig):
            make_builtin("free", {"mass": 0.0})

    def test_fixed_dimension_enforced(self):
        with pytest.raises(InvalidConfig):
            make_builtin("pendulum", dim=2)

    def test_default_dimensions(self):
        assert make_builtin("harmonic").dim == 1
        assert make_builtin("halfplane_metric").dim == 2
        assert make_builtin("euclidean_metric", dim=3).dim == 3

    def test_parameters_merge_with_defaults(self):
        model = make_builtin("harmonic", {"omega": "2.5"})
        assert model.parameters == {"omega": 2.5, "mass": 1.0}

    def test_quartic_is_not_a_regular_builtin(self):
        assert "quartic" in BUILTIN_CATALOG
        assert "quartic" not in REGULAR_BUILTINS
        assert len(REGULAR_BUILTINS) == 7


class TestEvaluate:
    """Tests for L and its first derivatives."""

    def test_free_particle(self):
        jet = evaluate(make_builtin("free", dim=2), [0.0, 0.0], [1.0, 2.0])
        assert jet.L == pytest.approx(2.5)
        np.testing.assert_array_equal(jet.dLdv, [1.0, 2.0])
        np.testing.assert_array_equal(jet.dLdq, [0.0, 0.0])

    def test_harmonic_force(self):
        jet = evaluate(make_builtin("harmonic"), [1.0], [0.0])
        assert jet.L == pytest.approx(-0.5)
        np.testing.assert_allclose(jet.dLdq, [-1.0])

    def test_pendulum_at_rest(self):
        jet = evaluate(make_builtin("pendulum", {"omega": 2.0}), [0.0], [0.0])
        assert jet.L == pytest.approx(4.0)

    def test_batches_evaluate_in_one_call(self):
        q = np.linspace(-1.0, 1.0, 7)[:, None]
        jet = evaluate(make_builtin("double_well"), q, np.zeros_like(q))
        assert jet.L.shape == (7,)
        assert jet.dLdq.shape == (7, 1)

    @pytest.mark.parametrize("name", REGULAR_BUILTINS)
    def test_first_derivatives_match_finite_differences(self, name):
        model = make_builtin(name)
        rng = np.random.default_rng(11)
        q, v = sample_points(name, model.dim, rng, 100)
        jet = evaluate(model, q, v)

        def central(shift, in_q):
            if in_q:
                upper, lower = evaluate(model, q + shift, v), evaluate(model, q - shift, v)
            else:
                upper, lower = evaluate(model, q, v + shift), evaluate(model, q, v - shift)
            return (upper.L - lower.L) / (2.0 * np.sum(shift, axis=-1))

        for b in range(model.dim):
            shift = np.zeros_like(q)
            shift[:, b] = fd_steps(q[:, b])
            dLdq = central(shift, in_q=True)
            shift[:, b] = fd_steps(v[:, b])
            dLdv = central(shift, in_q=False)
            np.testing.assert_allclose(dLdq, jet.dLdq[:, b], rtol=1e-5, atol=1e-8)
            np.testing.assert_allclose(dLdv, jet.dLdv[:, b], rtol=1e-5, atol=1e-8)

    def test_wrong_dimension_rejected(self):
        with pytest.raises(InvalidConfig):
            evaluate(make_builtin("halfplane_metric"), [1.0], [1.0])

    def test_off_domain_point_rejected(self):
        with pytest.raises(DomainError):
            evaluate(make_builtin("halfplane_metric"), [0.0, -1.0], [1.0, 0.0])

    def test_sphere_poles_are_off_domain(self):
        model = make_builtin("sphere_chart_metric")
        assert not model.in_domain(np.array([0.0, 0.3]), np.zeros(2))
        assert model.in_domain(np.array([1.0, 0.3]), np.zeros(2))

    def test_non_finite_point_rejected(self):
        with pytest.raises(DomainError):
            evaluate(make_builtin("free"), [np.nan], [0.0])


class TestSecondDerivatives:
    """Analytic Hessian blocks agree with central differences."""

    @pytest.mark.parametrize("name", list(REGULAR_BUILTINS) + ["quartic"])
    def test_analytic_blocks_match_finite_differences(self, name):
        model = make_builtin(name)
        numeric = make_custom(
            name + "_fd", model.dim, model.value_and_first_derivatives, domain=model.domain
        )
        rng = np.random.default_rng(20)
        q, v = sample_points(name, model.dim, rng, 100)

        exact = second_derivatives(model, q, v)
        approx = second_derivatives(numeric, q, v)
        for block in ("d2Ldv2", "d2Ldqdv", "d2Ldq2"):
            np.testing.assert_allclose(
                getattr(approx, block), getattr(exact, block), rtol=1e-6, atol=1e-6, err_msg=block
            )

    def test_mixed_block_convention_on_sphere(self):
        # d(dL/dphidot)/dtheta = R^2 sin(2 theta) phidot sits in row 1, column 0
        model = make_builtin("sphere_chart_metric", {"radius": 2.0})
        blocks = second_derivatives(model, [0.7, 0.0], [0.0, 1.5])
        assert blocks.d2Ldqdv[1, 0] == pytest.approx(4.0 * np.sin(1.4) * 1.5)
        assert blocks.d2Ldqdv[0, 1] == 0.0

    def test_custom_model_uses_finite_differences(self):
        def quartic_well(q, v):
            return LagrangianJet(
                L=0.5 * np.sum(v * v, axis=-1) - 0.25 * np.sum(q**4, axis=-1),
                dLdq=-(q**3),
                dLdv=v.copy(),
            )

        model = make_custom("quartic_well", 1, quartic_well)
        blocks = second_derivatives(model, [1.2], [0.3])
        assert blocks.d2Ldq2[0, 0] == pytest.approx(-3.0 * 1.2**2, rel=1e-6)
        assert blocks.d2Ldv2[0, 0] == pytest.approx(1.0, rel=1e-8)

    def test_rejects_non_positive_step(self):
        with pytest.raises(InvalidConfig):
            second_derivatives(make_builtin("free"), [0.0], [0.0], fd_step=0.0)


class TestRegularityCheck:
    """Tests for invertibility of d2L/dv2."""

    def test_free_particle_is_perfectly_conditioned(self):
        assert regularity_check(make_builtin("free", dim=3), np.zeros(3), np.ones(3)) == pytest.approx(1.0)

    def test_quartic_singular_at_rest(self):
        with pytest.raises(NonRegularLagrangian):
            regularity_check(make_builtin("quartic"), [0.0], [0.0])

    def test_quartic_regular_when_moving(self):
        assert regularity_check(make_builtin("quartic"), [0.0], [1.0]) == pytest.approx(1.0)

    def test_threshold_is_respected(self):
        # condition of diag(1, sin^2 theta) near the pole
        model = make_builtin("sphere_chart_metric")
        with pytest.raises(NonRegularLagrangian) as excinfo:
            regularity_check(model, [1e-3, 0.0], [0.0, 0.0], cond_threshold=1e4)
        assert excinfo.value.condition_estimate > 1e4


class TestEnergyAndLegendre:
    """Tests for the energy and the Legendre transform."""

    def test_harmonic_energy(self):
        assert energy(make_builtin("harmonic"), [1.0], [0.0]) == pytest.approx(0.5)

    def test_pendulum_energy(self):
        value = energy(make_builtin("pendulum"), [0.5], [0.2])
        assert value == pytest.approx(0.02 - np.cos(0.5))

    @pytest.mark.parametrize("name", REGULAR_BUILTINS)
    def test_round_trip(self, name):
        model = make_builtin(name)
        rng = np.random.default_rng(7)
        q, v = sample_points(name, model.dim, rng, 10)
        for qi, vi in zip(q, v):
            p = legendre(model, qi, vi)
            np.testing.assert_allclose(legendre_inverse(model, qi, p), vi, atol=1e-10)

    def test_quartic_inverse_fails_from_rest(self):
        with pytest.raises(NonRegularLagrangian):
            legendre_inverse(make_builtin("quartic"), [0.0], [1.0])

    def test_rejects_non_positive_tolerance(self):
        with pytest.raises(InvalidConfig):
            legendre_inverse(make_builtin("free"), [0.0], [1.0], tol=0.0)
