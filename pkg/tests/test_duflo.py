from __future__ import annotations

import itertools
import warnings
from fractions import Fraction

import pytest

from starlie.duflo import (NoConstraintError, WheelCoefficients,
                           annihilates_invariants, bernoulli, duflo_residual, eta,
                           kv_graded_residual, q_jet, solve_wheel_coeffs, tau_jet)
from starlie.lie import BUNDLED, adjoint_field, find_invariants, load_bundled, trace_power_poly
from starlie.poly import DiffOperator, Polynomial, monomials, parse_poly_expr
from starlie.starprod import CoverageError, StarContext
from starlie.uea import UEnvElement, symmetrize


def P(s, L):
    return parse_poly_expr(s, L.basis)


def test_bernoulli():
    assert bernoulli(0) == 1
    assert bernoulli(1) == Fraction(-1, 2)
    assert bernoulli(2) == Fraction(1, 6)
    assert bernoulli(4) == Fraction(-1, 30)
    assert bernoulli(3) == 0
    assert bernoulli(12) == Fraction(-691, 2730)


def test_q_jet_examples(sl2, heis3):
    assert q_jet(sl2, 0).poly == Polynomial.one(sl2.basis, "y")
    for order in range(5):
        assert q_jet(heis3, order).poly == Polynomial.one(heis3.basis, "y")
    q2 = q_jet(sl2, 2).poly
    assert q2 == Polynomial(sl2.basis, {(0, 0, 0): 1, (0, 2, 0): Fraction(1, 6),
                                        (1, 0, 1): Fraction(1, 6)}, "y")
    assert q2 - 1 == trace_power_poly(sl2, 1).scale(Fraction(1, 48))


@pytest.mark.parametrize("name", BUNDLED)
def test_jets_are_even_with_unit_constant(name):
    L = load_bundled(name)
    wc = WheelCoefficients({1: Fraction(1, 5), 2: Fraction(-1, 7), 3: Fraction(2)})
    for order in range(7):
        for jet in (q_jet(L, order), tau_jet(L, order, wc)):
            assert jet.poly.constant_term() == 1
            assert all(sum(e) % 2 == 0 for e in jet.poly.terms)
            assert jet.poly.degree() <= order


def test_tau_jet_examples(sl2, heis3):
    wc = WheelCoefficients({1: Fraction(3, 7)})
    assert tau_jet(sl2, 0, wc).poly == Polynomial.one(sl2.basis, "y")
    assert tau_jet(heis3, 4, WheelCoefficients({1: 1, 2: 1})).poly == Polynomial.one(heis3.basis, "y")
    assert tau_jet(sl2, 2, wc).poly == 1 + trace_power_poly(sl2, 1).scale(Fraction(3, 7))
    with pytest.raises(KeyError, match="c_4"):
        tau_jet(sl2, 4, wc)


def test_eta_examples(sl2):
    assert eta(Polynomial.one(sl2.basis), sl2) == UEnvElement.unit(sl2)
    for i in range(3):
        assert eta(Polynomial.var(sl2.basis, i), sl2) == UEnvElement.generator(sl2, i)
    C = P("4*e*f + h^2", sl2)
    assert eta(C, sl2) == symmetrize(C + 1, sl2)
    assert eta(C, sl2).degree() == 2


def test_eta_filtration(sl2, heis3):
    for L in (sl2, heis3):
        for d in range(5):
            for e in monomials(3, d):
                p = Polynomial.monomial(L.basis, e)
                u = eta(p, L)
                assert u.degree() == d
                assert u.top_symbol() == p


def test_duflo_residual_examples(sl2):
    one = Polynomial.one(sl2.basis)
    C = P("4*e*f + h^2", sl2)
    assert duflo_residual(one, one, sl2).is_zero()
    assert duflo_residual(C, C, sl2).is_zero()
    with pytest.warns(UserWarning, match="not invariant"):
        r = duflo_residual(P("e", sl2), P("f", sl2), sl2)
    assert not r.is_zero()


def test_duflo_on_invariant_pairs(sl2, heis3):
    for L in (sl2, heis3):
        basis = find_invariants(L, 2)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            for p, q in itertools.product(basis, repeat=2):
                assert duflo_residual(p, q, L).is_zero()


def test_solve_wheel_sl2(sl2, ctx):
    wc = solve_wheel_coeffs(sl2, ctx, 1)
    assert wc[1] == 0
    assert wc.test_elements[1] == "4*e*f + h^2"
    assert abs(wc[1]) <= 4


def test_solve_wheel_solvable(solv2, table):
    wc = solve_wheel_coeffs(solv2, StarContext(solv2, table, 2), 1)
    assert wc[1] == 0


def test_solve_wheel_nilpotent_has_no_constraint(heis3, abelian3, table):
    for L in (heis3, abelian3):
        with pytest.raises(NoConstraintError):
            solve_wheel_coeffs(L, StarContext(L, table, 2), 1)


def test_solve_wheel_needs_coverage(sl2, ctx):
    with pytest.raises(CoverageError, match="n=4"):
        solve_wheel_coeffs(sl2, ctx, 2)


def test_solve_wheel_with_mc_cross_check(sl2, ctx):
    wc = solve_wheel_coeffs(sl2, ctx, 1, mc_samples=200_000, seed=4)
    mean, err = wc.mc_value(1)
    assert wc.agrees(1)
    assert abs(mean) <= 4 + 3 * err


def test_kv_residual_depths(sl2, ctx):
    C = P("4*e*f + h^2", sl2)
    wc = solve_wheel_coeffs(sl2, ctx, 1)
    for depth in (0, 1, 2):
        comps = kv_graded_residual(C, C, ctx, depth, wc)
        assert sorted(comps) == list(range(4 - depth, 5))
        assert all(c.is_zero() for c in comps.values())
    comps = kv_graded_residual(C, C * C, ctx, 2, wc)
    assert sorted(comps) == [4, 5, 6]
    assert all(c.is_zero() for c in comps.values())


def test_kv_residual_is_nonzero_off_invariants(sl2, ctx):
    wc = solve_wheel_coeffs(sl2, ctx, 1)
    comps = kv_graded_residual(P("e", sl2), P("f", sl2), ctx, 1, wc)
    assert any(not c.is_zero() for c in comps.values())


def test_kv_residual_coverage(sl2, ctx):
    C = P("4*e*f + h^2", sl2)
    with pytest.raises(CoverageError):
        kv_graded_residual(C, C, ctx, 3, WheelCoefficients({1: 0}))
    with pytest.raises(KeyError):
        kv_graded_residual(C, C, ctx, 2, WheelCoefficients())


def test_annihilates_invariants(sl2, heis3):
    for L in (sl2, heis3):
        for a in range(L.dim):
            assert annihilates_invariants(adjoint_field(L, a), L, 4)
    assert not annihilates_invariants(DiffOperator.identity(sl2.basis), sl2, 2)
    assert annihilates_invariants(DiffOperator.zero(sl2.basis), sl2, 2)
    assert not annihilates_invariants(DiffOperator.partial(sl2.basis, 0), sl2, 2)
