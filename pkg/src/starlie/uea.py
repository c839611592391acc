"""Universal enveloping algebra in PBW normal order.

PBW monomials are exponent vectors over the basis order of the algebra file,
so ``(a, b, c)`` on sl2 means ``e^a h^b f^c``.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Mapping

from .lie import LieAlgebra
from .poly import Exponent, Polynomial

__all__ = ["UEnvElement", "uea_mul", "symmetrize", "unsymmetrize"]


class UEnvElement:
    __slots__ = ("algebra", "terms")

    def __init__(self, algebra: LieAlgebra, terms: Mapping[Exponent, object] | None = None):
        self.algebra = algebra
        clean: dict[Exponent, Fraction] = {}
        for e, c in (terms or {}).items():
            c = Fraction(c)
            if c:
                e = tuple(e)
                v = clean.get(e, Fraction(0)) + c
                if v:
                    clean[e] = v
                else:
                    clean.pop(e, None)
        self.terms = clean

    @classmethod
    def unit(cls, L: LieAlgebra) -> "UEnvElement":
        return cls(L, {(0,) * L.dim: 1})

    @classmethod
    def generator(cls, L: LieAlgebra, i: int) -> "UEnvElement":
        e = [0] * L.dim
        e[i] = 1
        return cls(L, {tuple(e): 1})

    @classmethod
    def zero(cls, L: LieAlgebra) -> "UEnvElement":
        return cls(L)

    def degree(self) -> int:
        """Filtration degree; -1 for zero."""
        return max((sum(e) for e in self.terms), default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def top_symbol(self) -> Polynomial:
        k = self.degree()
        return Polynomial(self.algebra.basis,
                          {e: c for e, c in self.terms.items() if sum(e) == k}, "x")

    def __add__(self, other: "UEnvElement") -> "UEnvElement":
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0) + c
        return UEnvElement(self.algebra, out)

    def __neg__(self):
        return UEnvElement(self.algebra, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "UEnvElement":
        c = Fraction(c)
        return UEnvElement(self.algebra, {e: v * c for e, v in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, UEnvElement):
            return uea_mul(self, other)
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return NotImplemented

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = UEnvElement.unit(self.algebra).scale(other)
        if not isinstance(other, UEnvElement):
            return NotImplemented
        return self.algebra.basis == other.algebra.basis and self.terms == other.terms

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        names = self.algebra.basis
        out = []
        items = sorted(self.terms.items(), key=lambda t: (-sum(t[0]), tuple(-k for k in t[0])))
        for i, (e, c) in enumerate(items):
            mono = " ".join(n if k == 1 else f"{n}^{k}" for n, k in zip(names, e) if k)
            a = abs(c)
            body = str(a) if not mono else (mono if a == 1 else f"{a}*{mono}")
            if i == 0:
                out.append(("-" if c < 0 else "") + body)
            else:
                out.append((" - " if c < 0 else " + ") + body)
        return "".join(out)

    def __repr__(self):
        return f"UEnvElement({self})"

    def term_list(self) -> str:
        items = sorted(self.terms.items(), key=lambda t: (-sum(t[0]), tuple(-k for k in t[0])))
        return ";".join(f"{c}:{','.join(map(str, e))}" for e, c in items)


@lru_cache(maxsize=None)
def _mono_times_gen(L: LieAlgebra, m: Exponent, j: int) -> tuple[tuple[Exponent, Fraction], ...]:
    """Normal-ordered ``m * x_j``.

    With ``x_i`` the highest generator present in ``m`` and ``i > j``,
    ``m' x_i x_j = (m' x_j) x_i + m' [x_i, x_j]``.
    """
    top = max((i for i, k in enumerate(m) if k), default=-1)
    if top <= j:
        e = list(m)
        e[j] += 1
        return ((tuple(e), Fraction(1)),)
    rest = list(m)
    rest[top] -= 1
    rest = tuple(rest)
    acc: dict[Exponent, Fraction] = {}
    for e1, c1 in _mono_times_gen(L, rest, j):
        for e2, c2 in _mono_times_gen(L, e1, top):
            acc[e2] = acc.get(e2, 0) + c1 * c2
    for k, c in L.bracket_vector(top, j).items():
        for e2, c2 in _mono_times_gen(L, rest, k):
            acc[e2] = acc.get(e2, 0) + c * c2
    return tuple((e, c) for e, c in acc.items() if c)


def _times_gen(u: dict[Exponent, Fraction], L: LieAlgebra, j: int) -> dict[Exponent, Fraction]:
    out: dict[Exponent, Fraction] = {}
    for m, c in u.items():
        for e, v in _mono_times_gen(L, m, j):
            out[e] = out.get(e, 0) + c * v
    return {e: c for e, c in out.items() if c}


def uea_mul(u: UEnvElement, v: UEnvElement) -> UEnvElement:
    """Product in U(g), returned in PBW normal order."""
    L = u.algebra
    if v.algebra.basis != L.basis:
        raise ValueError("elements belong to different algebras")
    out: dict[Exponent, Fraction] = {}
    for m, c in v.terms.items():
        acc = dict(u.terms)
        for j, k in enumerate(m):
            for _ in range(k):
                acc = _times_gen(acc, L, j)
        for e, w in acc.items():
            out[e] = out.get(e, 0) + c * w
    return UEnvElement(L, out)


@lru_cache(maxsize=None)
def _sym_mono(L: LieAlgebra, a: Exponent) -> tuple[tuple[Exponent, Fraction], ...]:
    # sym(x^a) = sum_i (a_i / k) x_i sym(x^(a - e_i)); left multiplication by
    # a generator is done through the general product.
    k = sum(a)
    if k == 0:
        return ((a, Fraction(1)),)
    acc = UEnvElement.zero(L)
    for i, ai in enumerate(a):
        if not ai:
            continue
        rest = list(a)
        rest[i] -= 1
        inner = UEnvElement(L, dict(_sym_mono(L, tuple(rest))))
        acc = acc + uea_mul(UEnvElement.generator(L, i), inner).scale(Fraction(ai, k))
    return tuple(acc.terms.items())


def symmetrize(p: Polynomial, L: LieAlgebra) -> UEnvElement:
    """Average over all orderings of each monomial, in PBW normal order."""
    if p.names != L.basis:
        raise ValueError("polynomial is not expressed in this algebra's coordinates")
    out: dict[Exponent, Fraction] = {}
    for a, c in p.terms.items():
        for e, v in _sym_mono(L, a):
            out[e] = out.get(e, 0) + c * v
    return UEnvElement(L, out)


def unsymmetrize(u: UEnvElement) -> Polynomial:
    """Inverse of :func:`symmetrize`, peeling off one degree at a time."""
    L = u.algebra
    result = Polynomial.zero(L.basis)
    rest = u
    while rest:
        top = rest.top_symbol()
        result = result + top
        rest = rest - symmetrize(top, L)
    return result
