from __future__ import annotations

import itertools
import math
import random
from fractions import Fraction

import pytest

from starlie.graphs import encode, enumerate_graphs, parse
from starlie.lie import BUNDLED, load_bundled, rescale
from starlie.poly import DiffOperator, Polynomial, apply_right_operator, monomials, parse_poly_expr
from starlie.starprod import (CoverageError, StarContext, b_gamma, coefficient_bound_report,
                              extract_right_operator, graph_bidiff, order_operator, star,
                              star_graded)


def P(s, L):
    return parse_poly_expr(s, L.basis)


def gamma(L, i, j):
    return Polynomial(L.basis, {tuple(int(t == k) for t in range(L.dim)): c / 2
                                for k, c in L.bracket_vector(i, j).items()})


def _random_poly(rng, L, degree):
    terms = {e: Fraction(rng.randint(-4, 4), rng.randint(1, 3))
             for d in range(degree + 1) for e in monomials(L.dim, d) if rng.random() < 0.4}
    return Polynomial(L.basis, terms)


def test_reference_graph_matches_hand_formula(sl2):
    # sum gamma^{i1 j1} d_{j1}(gamma^{i2 j2}) d_{i1} d_{i2} f1 d_{j2} f2
    g = parse("K2:(L,2);(L,R)")
    rng = random.Random(1)
    for _ in range(5):
        f1, f2 = _random_poly(rng, sl2, 3), _random_poly(rng, sl2, 2)
        expected = Polynomial.zero(sl2.basis)
        for i1, j1, i2, j2 in itertools.product(range(3), repeat=4):
            g1 = gamma(sl2, i1, j1)
            dg2 = gamma(sl2, i2, j2).diff(j1)
            if g1 and dg2:
                expected = expected + g1 * dg2 * f1.diff(i1).diff(i2) * f2.diff(j2)
        assert b_gamma(g, sl2, f1, f2) == expected


def test_graphs_outside_a_vanish_for_linear_gamma(sl2):
    a3 = {encode(g) for g in enumerate_graphs(3, "A")}
    rng = random.Random(2)
    outside = [g for g in enumerate_graphs(3, "G") if encode(g) not in a3]
    f1, f2 = P("e^2*h*f + h^3", sl2), P("e*f^2 + h^2*f + e", sl2)
    for g in rng.sample(outside, 60):
        assert not graph_bidiff(g, sl2)
        assert b_gamma(g, sl2, f1, f2).is_zero()
    # at n = 2 the two classes coincide
    assert {encode(g) for g in enumerate_graphs(2, "G")} == {encode(g) for g in enumerate_graphs(2, "A")}


def test_abelian_graph_operators_vanish(abelian3):
    for n in (1, 2):
        for g in enumerate_graphs(n):
            assert not graph_bidiff(g, abelian3)


def test_b_gamma_degree_and_bilinearity(sl2):
    rng = random.Random(4)
    g = parse("K2:(L,R);(L,R)")
    for _ in range(5):
        f1, f2, f3 = (Polynomial(sl2.basis, {e: rng.randint(-3, 3) for e in monomials(3, 3)})
                      for _ in range(3))
        out = b_gamma(g, sl2, f1, f2)
        assert out.is_zero() or (out.is_homogeneous() and out.degree() == 3 + 3 - 2)
        assert b_gamma(g, sl2, f1 + f3, f2) == out + b_gamma(g, sl2, f3, f2)


def test_abelian_star_is_commutative_product(abelian3, table):
    ctx = StarContext(abelian3, table, 2)
    for i, j in itertools.product(range(3), repeat=2):
        xi, xj = Polynomial.var(abelian3.basis, i), Polynomial.var(abelian3.basis, j)
        assert star(xi, xj, ctx) == xi * xj


def test_sl2_linear_products(sl2, ctx):
    e, h, f = (Polynomial.var(sl2.basis, i) for i in range(3))
    assert star(e, f, ctx) == e * f + h.scale(Fraction(1, 2)) - Fraction(1, 6)
    assert star(e, f, ctx) - star(f, e, ctx) == h
    assert star(h, h, ctx) == h * h - Fraction(1, 3)


@pytest.mark.parametrize("name", BUNDLED)
def test_commutators_all_bundled(name, table):
    L = load_bundled(name)
    ctx = StarContext(L, table, 2)
    for i, j in itertools.product(range(L.dim), repeat=2):
        xi, xj = Polynomial.var(L.basis, i), Polynomial.var(L.basis, j)
        assert star(xi, xj, ctx) - star(xj, xi, ctx) == L.bracket_poly(i, j)


def test_unitality(sl2, ctx):
    rng = random.Random(5)
    one = Polynomial.one(sl2.basis)
    for _ in range(10):
        f = _random_poly(rng, sl2, 2)
        assert star(f, one, ctx) == f and star(one, f, ctx) == f


def test_graded_components_match_per_order_sums(sl2, ctx, table):
    rng = random.Random(6)
    for _ in range(3):
        f1 = Polynomial(sl2.basis, {e: rng.randint(-3, 3) for e in monomials(3, 2)})
        f2 = Polynomial(sl2.basis, {e: rng.randint(-3, 3) for e in monomials(3, 2)})
        total = star(f1, f2, ctx, truncate=True)
        for n in range(3):
            direct = Polynomial.zero(sl2.basis)
            for g in enumerate_graphs(n):
                direct = direct + b_gamma(g, sl2, f1, f2).scale(table.weight(g))
            direct = direct.scale(Fraction(1, math.factorial(n)))
            assert total.homogeneous(4 - n) == direct


def test_star_coverage_error(sl2, ctx):
    C = P("4*e*f + h^2", sl2)
    with pytest.raises(CoverageError, match="n=3"):
        star(C, P("e", sl2), ctx)
    r = star_graded(C, P("e", sl2), ctx)
    assert not r.complete and r.missing_order == 3
    assert r.exact_degrees == frozenset({1, 2, 3})


def test_context_rejects_large_constants(sl2, table):
    with pytest.raises(ValueError, match="normalize"):
        StarContext(rescale(sl2, 10), table, 2)
    ctx = StarContext.create(rescale(sl2, 10), table)
    assert ctx.scale == Fraction(1, 10)
    with pytest.raises(CoverageError):
        StarContext(sl2, table, 3)


def test_graded_associativity_sl2(sl2, ctx):
    xs = [Polynomial.var(sl2.basis, i) for i in range(3)]
    for a, b, c in itertools.product(xs, repeat=3):
        left = star_graded(star(a, b, ctx), c, ctx)
        right = star_graded(a, star(b, c, ctx), ctx)
        for deg in left.exact_degrees & right.exact_degrees:
            if deg >= 1:
                assert (left.poly - right.poly).homogeneous(deg).is_zero()


def test_order_operator_zero_is_product(sl2, ctx):
    assert order_operator(ctx, 0) == {((0, 0, 0), (0, 0, 0)): Polynomial.one(sl2.basis)}
    with pytest.raises(CoverageError):
        order_operator(ctx, 3)


def test_order_operator_parallel_matches_serial(sl2, table):
    a = order_operator(StarContext(sl2, table, 2), 2, workers=1)
    b = order_operator(StarContext(sl2, table, 2), 2, workers=2)
    assert a == b


# -- right operators -------------------------------------------------------------

def test_right_operator_of_one(sl2, ctx):
    assert extract_right_operator(Polynomial.one(sl2.basis), ctx, 2) == DiffOperator.identity(sl2.basis)


def test_right_operator_abelian(abelian3, table):
    ctx = StarContext(abelian3, table, 2)
    D = extract_right_operator(Polynomial.var(abelian3.basis, 1), ctx, 1)
    assert D == DiffOperator.partial(abelian3.basis, 1)
    r = P("a^2*c + b", abelian3)
    assert apply_right_operator(r, D) == r * Polynomial.var(abelian3.basis, 1)


def test_right_operator_order_and_identity(sl2, ctx):
    rng = random.Random(8)
    for _ in range(20):
        p = _random_poly(rng, sl2, rng.randint(0, 3))
        l = max(p.degree(), 0)
        D = extract_right_operator(p, ctx, 3, strict=False)
        assert D.order() <= l
        for d in range(4):
            for e in monomials(3, d):
                r = Polynomial.monomial(sl2.basis, e)
                lhs = star_graded(r, p, ctx)
                rhs = apply_right_operator(r, D)
                assert lhs.poly == rhs
                for deg in lhs.exact_degrees:
                    assert lhs.poly.homogeneous(deg) == rhs.homogeneous(deg)


def test_right_operator_strict_coverage(sl2, ctx):
    with pytest.raises(CoverageError):
        extract_right_operator(P("e*f", sl2), ctx, 1)
    D = extract_right_operator(P("e", sl2), ctx, 1)
    assert D.coefficient_degree() <= 1


# -- coefficient bound ------------------------------------------------------------

def test_bound_abelian(abelian3, table):
    ctx = StarContext(abelian3, table, 2)
    rep = coefficient_bound_report(P("a*b", abelian3), ctx, 3)
    assert rep.ok and rep.bounded_coefficients == 0


def test_bound_sl2(sl2, ctx):
    for s in ("e*f", "h^2"):
        rep = coefficient_bound_report(P(s, sl2), ctx, 3)
        assert rep.ok and rep.max_ratio <= 1
        assert rep.exact_coefficients > 0 and rep.bounded_coefficients > 0


def test_bound_rejects_non_monomials(sl2, ctx):
    with pytest.raises(ValueError):
        coefficient_bound_report(P("e + f", sl2), ctx)
