# tests/test_net_core.py
"""Network evaluation, analytic derivatives and parameter serialization."""
from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import central_difference, make_params, numerical_gradient
from ritzkit.domain import (
    MultiIndex,
    NetworkParams,
    SCALING_NTK,
    TRAINABLE_FULL,
    all_indices_up_to,
    float_from_json,
    float_to_hex,
)
from ritzkit.errors import DerivativeOrderError, DimensionMismatchError
from ritzkit.net_core import (
    derivative_bound,
    evaluate,
    feature_derivative_vector,
    inner_param_gradient,
    network_jet,
    partial_derivative,
    tanh_kth_derivative,
    tanh_poly_coeffs,
)


class TestTanhPolynomials:
    """d^k tanh = P_k(tanh) with integer coefficients."""

    def test_low_orders(self):
        assert tanh_poly_coeffs(0) == (0, 1)
        assert tanh_poly_coeffs(1) == (1, 0, -1)
        assert tanh_poly_coeffs(2) == (0, -2, 0, 2)

    def test_parity_alternates(self):
        # even k gives an odd polynomial and vice versa
        for k in range(0, 9):
            coeffs = tanh_poly_coeffs(k)
            nonzero = [i for i, c in enumerate(coeffs) if c != 0]
            assert all((i + k) % 2 == 1 for i in nonzero)

    def test_bounds(self):
        assert derivative_bound(0) == 1.0
        assert derivative_bound(1) == 2.0
        assert derivative_bound(2) == 4.0

    def test_sup_norm_respects_bound(self):
        t = np.linspace(-6.0, 6.0, 4001)
        for k in range(0, 7):
            assert np.max(np.abs(tanh_kth_derivative(k, t))) <= derivative_bound(k) + 1e-12

    def test_first_derivative_is_sech_squared(self):
        t = 0.3
        assert tanh_kth_derivative(1, t) == pytest.approx(1.0 - np.tanh(t) ** 2, rel=1e-14)

    def test_matches_difference_of_previous_order(self):
        h = 1e-6
        for k in range(1, 6):
            for t in (-1.7, -0.2, 0.0, 0.9, 2.4):
                fd = (tanh_kth_derivative(k - 1, t + h) - tanh_kth_derivative(k - 1, t - h)) / (2 * h)
                assert tanh_kth_derivative(k, t) == pytest.approx(fd, abs=1e-6)

    def test_scalar_in_scalar_out(self):
        assert isinstance(tanh_kth_derivative(2, 0.5), float)
        assert tanh_kth_derivative(2, np.array([0.5, 1.0])).shape == (2,)

    def test_order_limit(self):
        with pytest.raises(DerivativeOrderError):
            tanh_kth_derivative(9, 0.1)
        with pytest.raises(DerivativeOrderError):
            tanh_poly_coeffs(-1)


class TestEvaluate:
    """u(x) = s * sum a_k tanh(w_k . x + b_k)."""

    def test_single_point_and_batch(self, rng):
        p = make_params(rng, 7, 3)
        X = rng.standard_normal((5, 3))
        batch = evaluate(p, X)
        assert batch.shape == (5,)
        assert isinstance(evaluate(p, X[2]), float)
        assert evaluate(p, X[2]) == pytest.approx(batch[2], rel=1e-15)

    def test_explicit_sum(self, rng):
        p = make_params(rng, 4, 2)
        x = np.array([0.3, -0.8])
        expected = sum(p.a[k] * np.tanh(p.w[k] @ x + p.b[k]) for k in range(4))
        assert evaluate(p, x) == pytest.approx(expected, rel=1e-13)

    def test_ntk_scaling(self, rng):
        p = make_params(rng, 16, 2)
        q = p.replace(scaling=SCALING_NTK)
        X = rng.standard_normal((3, 2))
        np.testing.assert_allclose(evaluate(q, X), evaluate(p, X) / 4.0, rtol=1e-14)

    def test_dimension_mismatch(self, rng):
        p = make_params(rng, 3, 2)
        with pytest.raises(DimensionMismatchError):
            evaluate(p, np.zeros((4, 3)))


class TestPartialDerivatives:
    """Analytic derivatives against finite differences."""

    def test_first_and_second_order(self, rng):
        p = make_params(rng, 12, 3)
        x = rng.uniform(-1.0, 1.0, 3)
        for i in range(3):
            fd = central_difference(lambda y: evaluate(p, y), x, i, h=1e-5)
            assert partial_derivative(p, x, MultiIndex.unit(3, i)) == pytest.approx(fd, abs=1e-7)
        mixed = MultiIndex((1, 1, 0))
        fd = central_difference(lambda y: partial_derivative(p, y, (1, 0, 0)), x, 1, h=1e-5)
        assert partial_derivative(p, x, mixed) == pytest.approx(fd, abs=1e-7)

    def test_orders_up_to_four(self, rng):
        p = make_params(rng, 10, 2)
        x = np.array([0.2, -0.4])
        for xi in all_indices_up_to(2, 4):
            if xi.order == 0:
                continue
            axis = next(i for i in range(2) if xi[i] > 0)
            lower = xi - MultiIndex.unit(2, axis)
            fd = central_difference(lambda y: partial_derivative(p, y, lower), x, axis, h=1e-5)
            assert partial_derivative(p, x, xi) == pytest.approx(fd, abs=1e-5)

    def test_zero_index_is_value(self, rng):
        p = make_params(rng, 5, 2)
        X = rng.standard_normal((4, 2))
        np.testing.assert_allclose(partial_derivative(p, X, (0, 0)), evaluate(p, X), rtol=1e-14)

    def test_order_above_limit(self, rng):
        p = make_params(rng, 3, 1)
        with pytest.raises(DerivativeOrderError):
            partial_derivative(p, np.array([0.1]), (9,))

    def test_feature_vector_is_linear_in_a(self, rng):
        p = make_params(rng, 6, 2)
        X = rng.standard_normal((3, 2))
        phi = feature_derivative_vector(p, X, (0, 2))
        assert phi.shape == (3, 6)
        np.testing.assert_allclose(phi @ p.a, partial_derivative(p, X, (0, 2)), rtol=1e-13)


class TestInnerGradients:
    """Jacobians over (a, w, b) for trainable='full'."""

    def test_inner_param_gradient(self, rng):
        p = make_params(rng, 4, 2, trainable=TRAINABLE_FULL)
        x = np.array([0.4, 0.1])
        xi = (1, 0)
        gw, gb = inner_param_gradient(p, x, xi)
        theta = p.trainable_vector()

        def value(th):
            return partial_derivative(p.with_trainable_vector(th), x, xi)

        g = numerical_gradient(value, theta, h=1e-6)
        m, d = p.m, p.d
        np.testing.assert_allclose(gw.reshape(-1), g[m:m + m * d], atol=1e-7)
        np.testing.assert_allclose(gb, g[m + m * d:], atol=1e-7)

    def test_inner_gradient_needs_full(self, rng):
        p = make_params(rng, 4, 2)
        with pytest.raises(ValueError):
            inner_param_gradient(p, np.zeros(2), (1, 0))

    def test_jet_jacobian(self, rng):
        p = make_params(rng, 3, 2, trainable=TRAINABLE_FULL)
        X = rng.uniform(-1.0, 1.0, (4, 2))
        xis = [(0, 0), (0, 1), (0, 2)]
        jet = network_jet(p, X, xis, jacobian=True)
        theta = p.trainable_vector()
        for xi in xis:
            J = jet.jacobian(xi)
            assert J.shape == (4, p.n_trainable)
            for n in range(4):
                g = numerical_gradient(
                    lambda th: partial_derivative(p.with_trainable_vector(th), X[n], xi), theta
                )
                np.testing.assert_allclose(J[n], g, atol=1e-7)

    def test_outer_only_jacobian_is_feature_matrix(self, rng):
        p = make_params(rng, 5, 2)
        X = rng.standard_normal((3, 2))
        jet = network_jet(p, X, [(1, 0)], jacobian=True)
        np.testing.assert_array_equal(jet.jacobian((1, 0)), feature_derivative_vector(p, X, (1, 0)))


class TestParams:
    """Trainable vector layout and bit-exact JSON."""

    def test_trainable_vector_round_trip(self, rng):
        p = make_params(rng, 3, 2, trainable=TRAINABLE_FULL)
        theta = p.trainable_vector()
        assert theta.size == p.n_trainable == 3 * 4
        np.testing.assert_array_equal(theta[:3], p.a)
        q = p.with_trainable_vector(theta)
        np.testing.assert_array_equal(q.w, p.w)
        np.testing.assert_array_equal(q.b, p.b)

    def test_wrong_vector_length(self, rng):
        p = make_params(rng, 3, 2)
        with pytest.raises(DimensionMismatchError):
            p.with_trainable_vector(np.zeros(4))

    def test_frozen_arrays(self, rng):
        p = make_params(rng, 3, 2)
        with pytest.raises(ValueError):
            p.a[0] = 1.0

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            NetworkParams(a=[1.0, 2.0], w=[[1.0, 0.0]], b=[0.0])

    def test_hex_json_is_exact(self, rng):
        p = make_params(rng, 4, 2, trainable=TRAINABLE_FULL)
        text = json.dumps(p.to_dict())
        q = NetworkParams.from_dict(json.loads(text))
        np.testing.assert_array_equal(q.a, p.a)
        np.testing.assert_array_equal(q.w, p.w)
        np.testing.assert_array_equal(q.b, p.b)
        assert q.trainable == TRAINABLE_FULL

    def test_decimal_floats_accepted(self):
        v = 0.1 + 0.2
        assert float_from_json(float_to_hex(v)) == v
        assert float_from_json(0.25) == 0.25
        assert float_from_json("0.5") == 0.5

    def test_declared_size_checked(self, rng):
        d = make_params(rng, 2, 2).to_dict()
        d["m"] = 3
        with pytest.raises(ValueError):
            NetworkParams.from_dict(d)


class TestMultiIndex:
    """Multi-index enumeration order and sub-index sets."""

    def test_all_indices_up_to(self):
        got = [mi.entries for mi in all_indices_up_to(2, 2)]
        assert got == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
        assert len(all_indices_up_to(3, 4)) == 35

    def test_sub_indices(self):
        subs = MultiIndex((1, 2)).sub_indices()
        assert [b.entries for b in subs] == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]
        assert all(MultiIndex((1, 2)).dominates(b) for b in subs)
