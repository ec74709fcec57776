# tests/test_operators.py
"""Linear, Robin, Burgers and monotone operators plus the boundary cutoff."""
from __future__ import annotations

import numpy as np
import pytest

from conftest import central_difference, make_params
from ritzkit.domain import MultiIndex
from ritzkit.errors import (
    DerivativeOrderError,
    DimensionMismatchError,
    NonUnitNormalError,
    ReactionAuditError,
    UnknownExpressionError,
)
from ritzkit.net_core import evaluate, partial_derivative
from ritzkit.operators import (
    CutoffSpec,
    EnergySpec,
    LinearOperatorSpec,
    LinearTerm,
    NonlinearOperatorSpec,
    Reaction,
    RobinSpec,
    apply_linear,
    boundary_value,
    builtin_field,
    builtin_reaction,
    burgers_residual,
    cutoff_eval,
    energy_density,
    field_values,
    heat_operator,
    laplacian_operator,
    monotone_residual,
    operator_from_dict,
)


@pytest.fixture
def box_cutoff():
    return CutoffSpec(lo=(0.0, 0.0), hi=(1.0, 1.0), margin_fraction=0.2)


class TestLinearOperator:
    """Admissibility and application of sum c_xi d^xi."""

    def test_two_leading_terms_rejected(self):
        with pytest.raises(ValueError):
            LinearOperatorSpec(terms=(LinearTerm((2, 0), 1.0), LinearTerm((0, 2), 1.0)))

    def test_zero_terms_dropped(self):
        op = LinearOperatorSpec(terms=(LinearTerm((0, 2), 1.0), LinearTerm((2, 0), 0.0)))
        assert op.xis() == [MultiIndex((0, 2))]

    def test_mixed_dimensions_rejected(self):
        with pytest.raises(ValueError):
            LinearOperatorSpec(terms=(LinearTerm((1, 0), 1.0), LinearTerm((0, 0, 2), 1.0)))

    def test_heat_leading_term(self):
        op = heat_operator(0.5)
        assert op.leading == MultiIndex((0, 2))
        assert op.order == 2

    def test_heat_application(self, rng):
        p = make_params(rng, 9, 2)
        X = rng.uniform(-1.0, 1.0, (6, 2))
        expected = partial_derivative(p, X, (1, 0)) - 0.5 * partial_derivative(p, X, (0, 2))
        np.testing.assert_allclose(apply_linear(heat_operator(0.5), p, X), expected, rtol=1e-13)

    def test_callable_coefficient(self, rng):
        p = make_params(rng, 5, 2)
        X = rng.uniform(0.0, 1.0, (4, 2))
        op = LinearOperatorSpec(terms=(
            LinearTerm((0, 0), lambda Y: 1.0 + Y[:, 0]),
            LinearTerm((1, 1), 2.0),
        ))
        expected = (1.0 + X[:, 0]) * evaluate(p, X) + 2.0 * partial_derivative(p, X, (1, 1))
        np.testing.assert_allclose(apply_linear(op, p, X), expected, rtol=1e-13)

    def test_with_cutoff_matches_product_rule(self, rng, box_cutoff):
        p = make_params(rng, 6, 2)
        x = np.array([0.13, 0.55])
        op = LinearOperatorSpec(terms=(LinearTerm((1, 0), 1.0),))

        def product(y):
            return cutoff_eval(box_cutoff, y, (0, 0)) * evaluate(p, y)

        fd = central_difference(product, x, 0, h=1e-6)
        assert apply_linear(op, p, x, cutoff=box_cutoff) == pytest.approx(fd, abs=1e-7)

    def test_dimension_mismatch(self, rng):
        p = make_params(rng, 3, 3)
        with pytest.raises(DimensionMismatchError):
            apply_linear(heat_operator(), p, np.zeros((2, 3)))

    def test_from_dict(self):
        op = operator_from_dict({"kind": "linear", "terms": [{"xi": [1, 0], "coeff": 1}, {"xi": [0, 2], "coeff": -1}]})
        assert isinstance(op, LinearOperatorSpec)
        assert op.leading == MultiIndex((0, 2))
        again = LinearOperatorSpec.from_dict(op.to_dict())
        assert again.xis() == op.xis()


class TestCutoff:
    """eta vanishes on the boundary and equals one on the plateau."""

    def test_boundary_and_plateau(self, box_cutoff):
        edge = np.array([[0.0, 0.5], [1.0, 0.3], [0.4, 0.0], [0.7, 1.0]])
        np.testing.assert_array_equal(cutoff_eval(box_cutoff, edge, (0, 0)), np.zeros(4))
        inner = np.array([[0.3, 0.3], [0.5, 0.8], [0.2, 0.2]])
        np.testing.assert_allclose(cutoff_eval(box_cutoff, inner, (0, 0)), np.ones(3))
        assert box_cutoff.in_plateau(inner).all()

    def test_derivatives_match_differences(self, box_cutoff):
        x = np.array([0.07, 0.91])
        for xi in [(1, 0), (0, 1)]:
            axis = xi.index(1)
            fd = central_difference(lambda y: cutoff_eval(box_cutoff, y, (0, 0)), x, axis, h=1e-6)
            assert cutoff_eval(box_cutoff, x, xi) == pytest.approx(fd, abs=1e-6)
        for xi, lower, axis in [((2, 0), (1, 0), 0), ((1, 1), (1, 0), 1), ((0, 2), (0, 1), 1)]:
            fd = central_difference(lambda y: cutoff_eval(box_cutoff, y, lower), x, axis, h=1e-6)
            assert cutoff_eval(box_cutoff, x, xi) == pytest.approx(fd, abs=1e-4)

    def test_first_derivatives_vanish_on_boundary(self, box_cutoff):
        edge = np.array([[0.0, 0.5], [0.5, 1.0]])
        np.testing.assert_allclose(cutoff_eval(box_cutoff, edge, (1, 0)), 0.0, atol=1e-14)
        np.testing.assert_allclose(cutoff_eval(box_cutoff, edge, (0, 1)), 0.0, atol=1e-14)

    def test_order_three_rejected(self, box_cutoff):
        with pytest.raises(DerivativeOrderError):
            cutoff_eval(box_cutoff, np.array([0.5, 0.5]), (2, 1))

    def test_invalid_margin(self):
        with pytest.raises(ValueError):
            CutoffSpec(lo=(0.0,), hi=(1.0,), margin_fraction=0.6)


class TestRobin:
    """B u = alpha u + beta du/dn."""

    def test_zero_pair_rejected(self):
        with pytest.raises(ValueError):
            RobinSpec(0.0, 0.0)

    def test_value(self, rng):
        p = make_params(rng, 5, 2)
        x = np.array([1.0, 0.4])
        n = np.array([1.0, 0.0])
        expected = 2.0 * evaluate(p, x) - 0.5 * partial_derivative(p, x, (1, 0))
        assert boundary_value(p, x, n, RobinSpec(2.0, -0.5)) == pytest.approx(expected, rel=1e-13)

    def test_batch_normals(self, rng):
        p = make_params(rng, 5, 2)
        X = np.array([[0.0, 0.3], [0.6, 1.0]])
        N = np.array([[-1.0, 0.0], [0.0, 1.0]])
        expected = -partial_derivative(p, X[:1], (1, 0))[0], partial_derivative(p, X[1:], (0, 1))[0]
        np.testing.assert_allclose(boundary_value(p, X, N, RobinSpec(0.0, 1.0)), expected, rtol=1e-13)

    def test_non_unit_normal(self, rng):
        p = make_params(rng, 3, 2)
        with pytest.raises(NonUnitNormalError):
            boundary_value(p, np.array([0.0, 0.5]), np.array([2.0, 0.0]), RobinSpec(1.0, 1.0))


class TestBurgers:
    """u_t + u u_x - nu u_xx."""

    def test_residual(self, rng):
        p = make_params(rng, 8, 2)
        X = rng.uniform(-1.0, 1.0, (5, 2))
        nu = 0.01
        u = evaluate(p, X)
        expected = (
            partial_derivative(p, X, (1, 0))
            + u * partial_derivative(p, X, (0, 1))
            - nu * partial_derivative(p, X, (0, 2))
        )
        np.testing.assert_allclose(burgers_residual(p, X, nu), expected, rtol=1e-12)

    def test_needs_two_dimensions(self, rng):
        p = make_params(rng, 3, 3)
        with pytest.raises(DimensionMismatchError):
            burgers_residual(p, np.zeros(3))


class TestMonotone:
    """p-Laplace and quasilinear residuals on the cutoff ansatz."""

    def test_p2_is_negative_laplacian(self, rng, box_cutoff):
        p = make_params(rng, 6, 2)
        X = rng.uniform(0.0, 1.0, (5, 2))
        op = NonlinearOperatorSpec(kind="p_laplace", p=2.0)
        expected = apply_linear(laplacian_operator(2, sign=-1.0), p, X, cutoff=box_cutoff)
        np.testing.assert_allclose(monotone_residual(op, box_cutoff, p, X), expected, rtol=1e-11, atol=1e-12)

    def test_p3_matches_divergence_form(self, rng):
        p = make_params(rng, 4, 2)
        x = np.array([0.35, 0.6])
        op = NonlinearOperatorSpec(kind="p_laplace", p=3.0)

        def flux(y, i):
            g = np.array([partial_derivative(p, y, (1, 0)), partial_derivative(p, y, (0, 1))])
            return np.linalg.norm(g) * g[i]

        div = sum(central_difference(lambda y: flux(y, i), x, i, h=1e-5) for i in range(2))
        assert monotone_residual(op, None, p, x) == pytest.approx(-div, abs=1e-6)

    def test_quasilinear_with_reaction(self, rng):
        p = make_params(rng, 4, 2)
        x = np.array([0.5, 0.25])
        op = NonlinearOperatorSpec(kind="quasilinear", q=2.0, reaction=builtin_reaction("cubic"))

        def flux(y, i):
            u = evaluate(p, y)
            return (1.0 + u * u) * partial_derivative(p, y, MultiIndex.unit(2, i))

        div = sum(central_difference(lambda y: flux(y, i), x, i, h=1e-5) for i in range(2))
        u = evaluate(p, x)
        expected = -div + 2.0 * u + u ** 3
        assert monotone_residual(op, None, p, x) == pytest.approx(expected, abs=1e-6)

    def test_reaction_sign_audit(self, rng):
        p = make_params(rng, 4, 2)
        bad = Reaction("negative", lambda u: -u, lambda u: -np.ones_like(u))
        op = NonlinearOperatorSpec(kind="p_laplace", p=2.0, reaction=bad)
        with pytest.raises(ReactionAuditError):
            monotone_residual(op, None, p, rng.uniform(0.0, 1.0, (3, 2)))

    def test_reaction_must_vanish_at_zero(self):
        with pytest.raises(ValueError):
            Reaction("shifted", lambda u: u + 1.0, lambda u: np.ones_like(u))

    def test_negative_q_rejected(self, rng):
        p = make_params(rng, 4, 2)
        op = NonlinearOperatorSpec(kind="p_laplace", p=2.0, q=-1.0)
        with pytest.raises(ReactionAuditError):
            monotone_residual(op, None, p, np.array([[0.5, 0.5]]))

    def test_p_below_two_rejected(self):
        with pytest.raises(ValueError):
            NonlinearOperatorSpec(kind="p_laplace", p=1.5)

    def test_builtin_reactions(self):
        damping = builtin_reaction("linear_damping:2.5")
        assert damping.h(np.array([2.0]))[0] == 5.0
        with pytest.raises(UnknownExpressionError):
            builtin_reaction("exp")


class TestEnergy:
    """Ritz energy densities."""

    def test_allen_cahn_at_zero_network(self, rng):
        p = make_params(rng, 5, 2, a_scale=0.0)
        spec = EnergySpec(kind="allen_cahn", epsilon=0.1)
        np.testing.assert_allclose(energy_density(spec, None, p, rng.uniform(0, 1, (4, 2))), 0.25)

    def test_p_laplace_density(self, rng):
        p = make_params(rng, 5, 2)
        x = np.array([0.3, 0.7])
        spec = EnergySpec(kind="p_laplace", p=3.0, f=2.0)
        g = np.array([partial_derivative(p, x, (1, 0)), partial_derivative(p, x, (0, 1))])
        expected = np.linalg.norm(g) ** 3 / 3.0 - 2.0 * evaluate(p, x)
        assert energy_density(spec, None, p, x) == pytest.approx(expected, rel=1e-12)


class TestFields:
    def test_builtin_names(self):
        X = np.array([[0.0, 0.5], [0.2, -0.5]])
        np.testing.assert_allclose(builtin_field("neg_sin_pi_x")(X), [-1.0, 1.0], atol=1e-15)
        assert builtin_field(3) == 3.0
        assert builtin_field("1.5") == 1.5

    def test_unknown_name(self):
        with pytest.raises(UnknownExpressionError):
            builtin_field("exp_decay")

    def test_call_form_follows_signature(self):
        X = np.array([[0.0, 0.5], [1.0, 0.25]])
        N = np.array([[-1.0, 0.0], [1.0, 0.0]])
        np.testing.assert_array_equal(field_values(lambda Y: Y[:, 1], X, N), [0.5, 0.25])
        np.testing.assert_array_equal(field_values(lambda Y, normals: normals[:, 0], X, N), [-1.0, 1.0])
        np.testing.assert_array_equal(field_values(2.0, X), [2.0, 2.0])

    def test_errors_inside_a_field_propagate(self):
        def broken(Y, normals=None):
            raise TypeError("bad coefficient")

        X = np.zeros((2, 2))
        with pytest.raises(TypeError, match="bad coefficient"):
            field_values(broken, X, np.ones((2, 2)))
        with pytest.raises(TypeError, match="bad coefficient"):
            field_values(broken, X)
