"""The Duflo side: Bernoulli numbers, the jets q and tau, the map
eta(p) = sym(p q), exact wheel coefficients, and residual checks for the
Duflo and graded Kashiwara-Vergne identities."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from .graphs import wheel
from .lie import LieAlgebra, find_invariants, is_invariant, trace_power_poly
from .poly import DiffOperator, Polynomial, apply_right_operator, monomials, pairing
from .starprod import CoverageError, StarContext, kappa, star_graded
from .uea import UEnvElement, symmetrize, uea_mul
from .weights import WeightEstimate, mc_weight

__all__ = [
    "NoConstraintError",
    "InconsistentConstraints",
    "JetSeries",
    "WheelCoefficients",
    "bernoulli",
    "q_jet",
    "tau_jet",
    "solve_wheel_coeffs",
    "eta",
    "duflo_residual",
    "kv_graded_residual",
    "annihilates_invariants",
]


class NoConstraintError(ValueError):
    """Every trace power vanishes, so the identity does not see the coefficient."""


class InconsistentConstraints(ValueError):
    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals or []


@lru_cache(maxsize=None)
def bernoulli(n: int) -> Fraction:
    """B_n with B_1 = -1/2, from sum_{k<=n} C(n+1, k) B_k = 0."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return Fraction(1)
    if n > 1 and n % 2:
        return Fraction(0)
    s = sum(math.comb(n + 1, k) * bernoulli(k) for k in range(n))
    return -s / (n + 1)


@dataclass(frozen=True)
class JetSeries:
    """A y-polynomial known exactly through degree ``order``."""

    order: int
    poly: Polynomial

    def __post_init__(self):
        if self.poly.tag != "y":
            raise ValueError("jets are functions on g (y-polynomials)")
        if any(sum(e) % 2 for e in self.poly.terms):
            raise ValueError("jet has odd-degree terms")
        if self.poly.constant_term() != 1:
            raise ValueError("jet constant term must be 1")

    def __str__(self) -> str:
        return f"{self.poly} + O({self.order + 1})"


def _exp_jet(s: Polynomial, order: int) -> Polynomial:
    """exp(s) through degree ``order`` for ``s`` without constant term."""
    out = Polynomial.one(s.names, "y")
    term = Polynomial.one(s.names, "y")
    m = 1
    while True:
        term = (term * s).truncate(order).scale(Fraction(1, m))
        if not term:
            break
        out = out + term
        m += 1
    return out


def q_jet(L: LieAlgebra, order: int) -> JetSeries:
    """exp(sum_k B_2k / (4k (2k)!) tr (ad x)^2k) through degree ``order``."""
    if order < 0:
        raise ValueError("order must be nonnegative")
    s = Polynomial.zero(L.basis, "y")
    for k in range(1, order // 2 + 1):
        s = s + trace_power_poly(L, k).scale(bernoulli(2 * k) / (4 * k * math.factorial(2 * k)))
    return JetSeries(order, _exp_jet(s, order))


@dataclass
class WheelCoefficients:
    """c_2k keyed by k; exact rationals, optionally with MC cross-checks."""

    values: dict[int, Fraction] = field(default_factory=dict)
    estimates: dict[int, WeightEstimate] = field(default_factory=dict)
    test_elements: dict[int, str] = field(default_factory=dict)

    def __getitem__(self, k: int) -> Fraction:
        try:
            return self.values[k]
        except KeyError:
            raise KeyError(f"wheel coefficient c_{2 * k} is not available") from None

    def covers(self, order: int) -> bool:
        return all(k in self.values for k in range(1, order // 2 + 1))

    def mc_value(self, k: int) -> tuple[float, float]:
        """(mean, stderr) of w(W_2k) / 2^2k."""
        est = self.estimates[k]
        scale = 2 ** (2 * k)
        return est.mean / scale, est.stderr / scale

    def agrees(self, k: int, tolerance: float = 3.0) -> bool:
        mean, err = self.mc_value(k)
        return abs(mean - float(self.values[k])) <= tolerance * err


def tau_jet(L: LieAlgebra, order: int, wc: WheelCoefficients) -> JetSeries:
    """exp(sum_k c_2k tr (ad x)^2k) through degree ``order``."""
    if order < 0:
        raise ValueError("order must be nonnegative")
    s = Polynomial.zero(L.basis, "y")
    for k in range(1, order // 2 + 1):
        tp = trace_power_poly(L, k)
        if tp:
            s = s + tp.scale(wc[k])
    return JetSeries(order, _exp_jet(s, order))


def _times_jet(p: Polynomial, jet: Polynomial) -> Polynomial:
    """p * jet on distributions: jet(d_x) applied to p."""
    return jet.truncate(max(p.degree(), 0)).retag("x").apply_as_operator(p)


def eta(p: Polynomial, L: LieAlgebra) -> UEnvElement:
    """sym(p q), the product with q read through the pairing."""
    d = max(p.degree(), 0)
    return symmetrize(_times_jet(p, q_jet(L, d).poly), L)


def _test_elements(L: LieAlgebra, k: int) -> list[Polynomial]:
    """Degree-2k invariants pairing nontrivially with tr (ad x)^2k, then the
    degree-2k monomials that do."""
    tp = trace_power_poly(L, k)
    out = []
    for p in find_invariants(L, 2 * k):
        top = p.homogeneous(2 * k)
        if top and top == p and pairing(top, tp):
            out.append(top)
    for e in monomials(L.dim, 2 * k):
        m = Polynomial.monomial(L.basis, e)
        if pairing(m, tp):
            out.append(m)
    return out


def solve_wheel_coeffs(L: LieAlgebra, ctx: StarContext, kmax: int = 1,
                       mc_samples: int | None = None, seed: int = 0,
                       workers: int = 1) -> WheelCoefficients:
    """Exact c_2k for k <= kmax from kappa(p tau) = eta(p).

    The identity is affine in the newest unknown c_2k once the lower ones
    are fixed; it is solved on the first test element that depends on it and
    checked on all the others.  With ``mc_samples`` each value is compared
    against w(W_2k) / 2^2k.
    """
    if L.basis != ctx.algebra.basis or L.constants != ctx.algebra.constants:
        raise ValueError("algebra differs from the context's (normalized) algebra")
    if kmax < 1:
        raise ValueError("kmax must be at least 1")
    if all(not trace_power_poly(L, k) for k in range(1, kmax + 1)):
        raise NoConstraintError(f"{L.name}: all trace powers vanish; the wheel "
                                "coefficients are not constrained")
    wc = WheelCoefficients()
    for k in range(1, kmax + 1):
        if 2 * k > ctx.max_n:
            raise CoverageError(2 * k, ctx.max_n, f"wheel coefficient c_{2 * k}")
        tests = _test_elements(L, k)
        if not tests:
            raise NoConstraintError(f"{L.name}: no degree-{2 * k} element sees c_{2 * k}")

        def residual(p: Polynomial, c: Fraction) -> UEnvElement:
            trial = WheelCoefficients(dict(wc.values) | {k: c})
            tau = tau_jet(L, 2 * k, trial).poly
            return kappa(_times_jet(p, tau), ctx) - eta(p, L)

        value = None
        for p in tests:
            r0 = residual(p, Fraction(0))
            r1 = residual(p, Fraction(1)) - r0
            if r1.is_zero():
                continue
            t = next(iter(r1.terms))
            value = -r0.terms.get(t, Fraction(0)) / r1.terms[t]
            wc.test_elements[k] = str(p)
            break
        if value is None:
            raise NoConstraintError(f"{L.name}: no test element depends on c_{2 * k}")
        bad = []
        for p in tests:
            r = residual(p, value)
            if not r.is_zero():
                bad.append((str(p), str(r)))
        if bad:
            raise InconsistentConstraints(
                f"c_{2 * k} = {value} does not satisfy every test element", bad)
        wc.values[k] = value
        if mc_samples:
            wc.estimates[k] = mc_weight(wheel(2 * k), mc_samples, seed, workers)
    return wc


def duflo_residual(p1: Polynomial, p2: Polynomial, L: LieAlgebra) -> UEnvElement:
    """eta(p1 p2) - eta(p1) eta(p2); zero is only expected for invariants."""
    for p in (p1, p2):
        if not is_invariant(L, p):
            warnings.warn(f"{p} is not invariant; the Duflo identity is not asserted",
                          stacklevel=2)
    return eta(p1 * p2, L) - uea_mul(eta(p1, L), eta(p2, L))


def kv_graded_residual(r: Polynomial, p: Polynomial, ctx: StarContext, depth: int,
                       wc: WheelCoefficients) -> dict[int, Polynomial]:
    """Components of ``(r p) tau - (r tau) * (p tau)`` in degrees
    ``>= deg r + deg p - depth``, which only involve graph orders n <= depth
    and tau through degree ``depth``."""
    L = ctx.algebra
    if depth > ctx.max_n:
        raise CoverageError(depth, ctx.max_n, "graded residual")
    if not wc.covers(depth):
        missing = next(k for k in range(1, depth // 2 + 1) if k not in wc.values)
        raise KeyError(f"wheel coefficient c_{2 * missing} needed for depth {depth}")
    tau = tau_jet(L, depth, wc).poly
    lhs = _times_jet(r * p, tau)
    res = star_graded(_times_jet(r, tau), _times_jet(p, tau), ctx)
    total = max(r.degree(), 0) + max(p.degree(), 0)
    lo = max(total - depth, 0)
    out: dict[int, Polynomial] = {}
    diff = lhs - res.poly
    for deg in range(total, lo - 1, -1):
        if deg not in res.exact_degrees:
            raise CoverageError(total - deg, ctx.max_n, f"degree-{deg} component")
        out[deg] = diff.homogeneous(deg)
    return out


def annihilates_invariants(D: DiffOperator, L: LieAlgebra, d: int) -> bool:
    """Whether ``p . D = 0`` for every invariant of degree <= d: a necessary
    condition for D to lie in the right ideal generated by adjoint fields."""
    return all(not apply_right_operator(p, D) for p in find_invariants(L, d))
