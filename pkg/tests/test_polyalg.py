"""Polynomial arithmetic, calculus, and evaluation."""

import math
from fractions import Fraction

import numpy as np
import pytest

from sdereach.polyalg import (
    DimensionMismatchError,
    Monomial,
    Polynomial,
    poly_vector_dot,
)


def x(n=1, i=0):
    return Polynomial.variable(n, i)


def rand_poly(rng, n, max_degree=4, n_terms=5, bound=3.0):
    terms = []
    for _ in range(n_terms):
        exps = tuple(int(e) for e in rng.integers(0, max_degree + 1, size=n))
        if sum(exps) > max_degree:
            continue
        terms.append((float(rng.uniform(-bound, bound)), exps))
    return Polynomial.from_terms(n, terms)


class TestCanonicalForm:
    def test_no_zero_coefficients_stored(self):
        p = Polynomial.from_terms(1, [(1.0, (2,)), (-1.0, (2,)), (3.0, (0,))])
        assert p.terms == {Monomial((0,)): 3.0}

    def test_equality_is_term_map_equality(self):
        p = x() * x() + 1.0
        q = Polynomial.from_terms(1, [(1.0, (2,)), (1.0, (0,))])
        assert p == q
        assert p != q + 1e-9

    def test_dimension_is_immutable_and_checked(self):
        p = x(2)
        q = x(1)
        with pytest.raises(DimensionMismatchError):
            p.add(q)
        with pytest.raises(DimensionMismatchError):
            p.mul(q)

    def test_str_rendering_sorted_graded_lex(self):
        p = Polynomial.from_terms(1, [(-8.0, (4,)), (8.0, (2,)), (0.4, (0,))])
        assert str(p) == "-8*x1^4 + 8*x1^2 + 0.4"


class TestAdd:
    def test_additive_inverse(self):
        p = x() * x()
        assert p.add(p.neg()).is_zero()

    def test_cancellation(self):
        assert (x() + 1.0) + (x() - 1.0) == 2.0 * x()

    def test_monomial_key_commutativity(self):
        x1, x2 = x(2, 0), x(2, 1)
        assert x1 * x2 + x2 * x1 == 2.0 * x1 * x2


class TestMul:
    def test_difference_of_squares(self):
        assert (x() - 1.0) * (x() + 1.0) == x() * x() - 1.0

    def test_double_well_potential_expansion(self):
        # (x-1)^2 (x+1)^2 expanded by hand: x^4 - 2x^2 + 1
        u = (x() - 1.0) * (x() - 1.0) * (x() + 1.0) * (x() + 1.0)
        assert u == Polynomial.from_terms(1, [(1.0, (4,)), (-2.0, (2,)), (1.0, (0,))])

    def test_annihilator(self):
        p = rand_poly(np.random.default_rng(0), 2)
        assert p.mul(Polynomial.zero(2)).is_zero()

    def test_degree_additivity(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p, q = rand_poly(rng, 2), rand_poly(rng, 2)
            if p.is_zero() or q.is_zero():
                continue
            assert p.mul(q).degree == p.degree + q.degree


class TestDifferentiate:
    def test_power_rule(self):
        assert (x() * x()).differentiate(0) == 2.0 * x()

    def test_independent_variable(self):
        x1 = x(2, 0)
        assert (x1 * x1 * x1).differentiate(1).is_zero()

    def test_double_well_drift(self):
        # d/dx (x-1)^2 (x+1)^2 = 4x^3 - 4x, the negated double-well drift
        u = (x() - 1.0) * (x() - 1.0) * (x() + 1.0) * (x() + 1.0)
        assert u.differentiate(0) == Polynomial.from_terms(1, [(4.0, (3,)), (-4.0, (1,))])

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            x().differentiate(1)


class TestEvaluate:
    def test_root(self):
        assert (x() * x() - 1.0).evaluate([1.0]) == 0.0

    def test_generator_value_against_fraction_oracle(self):
        # -8x^4 + 8x^2 + 0.4 at x = 2, via exact rational arithmetic
        coeffs = {4: -8, 2: 8, 0: Fraction(2, 5)}
        oracle = sum(Fraction(c) * Fraction(2) ** e for e, c in coeffs.items())
        assert oracle == Fraction(-478, 5)  # -95.6
        p = Polynomial.from_terms(1, [(-8.0, (4,)), (8.0, (2,)), (0.4, (0,))])
        assert p.evaluate([2.0]) == pytest.approx(float(oracle), abs=1e-12)

    def test_constant(self):
        assert Polynomial.constant(1, 0.4).evaluate([7.0]) == 0.4

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            x(2).evaluate([1.0])

    def test_eval_batch_matches_scalar(self):
        rng = np.random.default_rng(2)
        p = rand_poly(rng, 3)
        pts = rng.uniform(-2, 2, size=(50, 3))
        batch = p.eval_batch(pts)
        for k in range(50):
            assert batch[k] == pytest.approx(p.evaluate(pts[k]), rel=1e-12, abs=1e-12)


class TestGradientHessian:
    def test_gradient_of_sum_of_squares(self):
        x1, x2 = x(2, 0), x(2, 1)
        grad = (x1 * x1 + x2 * x2).gradient()
        assert grad[0] == 2.0 * x1
        assert grad[1] == 2.0 * x2

    def test_hessian_of_product(self):
        x1, x2 = x(2, 0), x(2, 1)
        hess = (x1 * x2).hessian()
        assert hess[0][0].is_zero() and hess[1][1].is_zero()
        assert hess[0][1] == Polynomial.constant(2, 1.0)
        assert hess[1][0] == Polynomial.constant(2, 1.0)

    def test_wolfe_quapp_gradient_matches_stated_components(self):
        x1, x2 = x(2, 0), x(2, 1)
        u = (
            x1 * x1 * x1 * x1 + x2 * x2 * x2 * x2
            - 2.0 * x1 * x1 - 4.0 * x2 * x2
            + x1 * x2 + 0.3 * x1 + 0.1 * x2
        )
        grad = u.gradient()
        expected0 = 4.0 * x1 * x1 * x1 - 4.0 * x1 + x2 + 0.3
        expected1 = 4.0 * x2 * x2 * x2 - 8.0 * x2 + x1 + 0.1
        assert grad[0] == expected0
        assert grad[1] == expected1

    def test_hessian_entrywise_symmetric_and_consistent(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            p = rand_poly(rng, 3)
            grad = p.gradient()
            hess = p.hessian()
            for i in range(3):
                for j in range(3):
                    assert hess[i][j] == hess[j][i]
                    assert hess[i][j] == grad[i].differentiate(j)


class TestRingProperties:
    def test_ring_axioms_on_random_polynomials(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            p, q, r = (rand_poly(rng, 2) for _ in range(3))
            scale = max(1.0, p.max_abs_coeff(), q.max_abs_coeff(), r.max_abs_coeff())
            tol = 1e-10 * scale * scale
            assert p.add(q) == q.add(p)
            assert p.mul(q).equals_within(q.mul(p), tol)
            assert p.add(q).add(r) == p.add(q.add(r))
            assert p.mul(q).mul(r).equals_within(p.mul(q.mul(r)), tol * scale)
            assert p.mul(q.add(r)).equals_within(p.mul(q).add(p.mul(r)), tol)

    def test_evaluate_is_ring_homomorphism(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            p, q = rand_poly(rng, 2), rand_poly(rng, 2)
            pt = rng.uniform(-1.5, 1.5, size=2)
            lhs = p.mul(q).evaluate(pt)
            rhs = p.evaluate(pt) * q.evaluate(pt)
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)

    def test_leibniz_rule(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            p, q = rand_poly(rng, 2, max_degree=3), rand_poly(rng, 2, max_degree=3)
            for var in range(2):
                lhs = p.mul(q).differentiate(var)
                rhs = p.differentiate(var).mul(q).add(p.mul(q.differentiate(var)))
                assert lhs.equals_within(rhs, 1e-10)


def test_poly_vector_dot():
    x1, x2 = x(2, 0), x(2, 1)
    assert poly_vector_dot([x1, x2], [x2, x1]) == 2.0 * x1 * x2
    with pytest.raises(ValueError):
        poly_vector_dot([], [])
