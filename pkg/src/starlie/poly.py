"""Exact sparse polynomials, polynomial-coefficient differential operators,
and the distribution/function pairing.

Two coordinate families share one class.  ``x``-polynomials are elements of
S(g), read either as polynomial functions on g* or as distributions supported
at 0 in g (``x^a`` stands for the derivative ``d^a delta_0``).  ``y``-polynomials
are polynomial functions on g; differential operators act on those.
"""

from __future__ import annotations

import itertools
import math
import re
from fractions import Fraction
from typing import Iterable, Iterator, Mapping

Exponent = tuple[int, ...]

__all__ = [
    "Polynomial",
    "DiffOperator",
    "PolyParseError",
    "pairing",
    "apply_right_operator",
    "multiply_jet",
    "parse_poly_expr",
    "monomials",
]


def _frac(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, float):
        raise TypeError("float coefficients are not allowed; use Fraction")
    return Fraction(c)


def monomials(dim: int, degree: int) -> Iterator[Exponent]:
    """All exponent vectors of total ``degree``, in lexicographic order."""
    if dim == 0:
        if degree == 0:
            yield ()
        return
    for first in range(degree, -1, -1):
        for rest in monomials(dim - 1, degree - first):
            yield (first,) + rest


def _factorial_of(a: Exponent) -> int:
    out = 1
    for k in a:
        out *= math.factorial(k)
    return out


class Polynomial:
    """Sparse polynomial with exact rational coefficients.

    ``terms`` maps exponent vectors to nonzero ``Fraction`` coefficients.
    Instances are treated as immutable.
    """

    __slots__ = ("names", "tag", "terms")

    def __init__(self, names: Iterable[str], terms: Mapping[Exponent, object] | None = None,
                 tag: str = "x"):
        self.names = tuple(names)
        if tag not in ("x", "y"):
            raise ValueError(f"unknown coordinate tag {tag!r}")
        self.tag = tag
        clean: dict[Exponent, Fraction] = {}
        d = len(self.names)
        for e, c in (terms or {}).items():
            e = tuple(e)
            if len(e) != d:
                raise ValueError(f"exponent {e} has wrong length for dimension {d}")
            if any(k < 0 for k in e):
                raise ValueError(f"negative exponent in {e}")
            c = _frac(c)
            if c:
                clean[e] = clean.get(e, Fraction(0)) + c
                if not clean[e]:
                    del clean[e]
        self.terms = clean

    # -- constructors -----------------------------------------------------
    @classmethod
    def _raw(cls, names, terms, tag) -> "Polynomial":
        p = object.__new__(cls)
        p.names, p.terms, p.tag = names, terms, tag
        return p

    @classmethod
    def zero(cls, names, tag="x") -> "Polynomial":
        return cls(names, {}, tag)

    @classmethod
    def constant(cls, names, c, tag="x") -> "Polynomial":
        names = tuple(names)
        return cls(names, {(0,) * len(names): c}, tag)

    @classmethod
    def one(cls, names, tag="x") -> "Polynomial":
        return cls.constant(names, 1, tag)

    @classmethod
    def var(cls, names, i: int, tag="x") -> "Polynomial":
        names = tuple(names)
        e = [0] * len(names)
        e[i] = 1
        return cls(names, {tuple(e): 1}, tag)

    @classmethod
    def monomial(cls, names, exps: Exponent, coeff=1, tag="x") -> "Polynomial":
        return cls(names, {tuple(exps): coeff}, tag)

    # -- basic queries ----------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.names)

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(e) for e in self.terms), default=-1)

    def min_degree(self) -> int:
        return min((sum(e) for e in self.terms), default=-1)

    def coeff(self, e: Exponent) -> Fraction:
        return self.terms.get(tuple(e), Fraction(0))

    def constant_term(self) -> Fraction:
        return self.coeff((0,) * self.dim)

    def homogeneous(self, k: int) -> "Polynomial":
        return Polynomial._raw(self.names, {e: c for e, c in self.terms.items() if sum(e) == k},
                               self.tag)

    def truncate(self, max_degree: int) -> "Polynomial":
        return Polynomial._raw(self.names,
                               {e: c for e, c in self.terms.items() if sum(e) <= max_degree},
                               self.tag)

    def components(self) -> dict[int, "Polynomial"]:
        out: dict[int, dict] = {}
        for e, c in self.terms.items():
            out.setdefault(sum(e), {})[e] = c
        return {k: Polynomial._raw(self.names, t, self.tag) for k, t in sorted(out.items())}

    def is_homogeneous(self) -> bool:
        return len({sum(e) for e in self.terms}) <= 1

    def retag(self, tag: str) -> "Polynomial":
        return Polynomial._raw(self.names, dict(self.terms), tag)

    # -- arithmetic -------------------------------------------------------
    def _check(self, other: "Polynomial") -> None:
        if other.names != self.names:
            raise ValueError("polynomials live in different coordinate systems")
        if other.tag != self.tag:
            raise ValueError(f"coordinate-tag mismatch: {self.tag} vs {other.tag}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, Fraction)):
            return Polynomial.constant(self.names, other, self.tag)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for e, c in other.terms.items():
            v = out.get(e, 0) + c
            if v:
                out[e] = v
            else:
                out.pop(e, None)
        return Polynomial._raw(self.names, out, self.tag)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw(self.names, {e: -c for e, c in self.terms.items()}, self.tag)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "Polynomial":
        c = _frac(c)
        if not c:
            return Polynomial.zero(self.names, self.tag)
        return Polynomial._raw(self.names, {e: v * c for e, v in self.terms.items()}, self.tag)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        out: dict[Exponent, Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                v = out.get(e, 0) + c1 * c2
                if v:
                    out[e] = v
                else:
                    out.pop(e, None)
        return Polynomial._raw(self.names, out, self.tag)

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return NotImplemented

    def __pow__(self, k: int) -> "Polynomial":
        out = Polynomial.one(self.names, self.tag)
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = Polynomial.constant(self.names, other, self.tag)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.names == other.names and self.tag == other.tag and self.terms == other.terms

    def __hash__(self):
        return hash((self.names, self.tag, frozenset(self.terms.items())))

    # -- calculus ---------------------------------------------------------
    def diff(self, i: int, times: int = 1) -> "Polynomial":
        out = {}
        for e, c in self.terms.items():
            if e[i] < times:
                continue
            f = 1
            for t in range(times):
                f *= e[i] - t
            ne = list(e)
            ne[i] -= times
            out[tuple(ne)] = c * f
        return Polynomial._raw(self.names, out, self.tag)

    def diff_multi(self, beta: Exponent) -> "Polynomial":
        """Apply the mixed partial derivative with multi-index ``beta``."""
        out = {}
        for e, c in self.terms.items():
            if any(a < b for a, b in zip(e, beta)):
                continue
            f = 1
            for a, b in zip(e, beta):
                for t in range(b):
                    f *= a - t
            out[tuple(a - b for a, b in zip(e, beta))] = c * f
        return Polynomial._raw(self.names, out, self.tag)

    def apply_as_operator(self, other: "Polynomial") -> "Polynomial":
        """Substitute partial derivatives for the variables: ``self(d) other``."""
        out = Polynomial.zero(other.names, other.tag)
        for a, c in self.terms.items():
            out = out + other.diff_multi(a).scale(c)
        return out

    def evaluate(self, point: Mapping[str, object] | Iterable[object]):
        if isinstance(point, Mapping):
            vals = [point[n] for n in self.names]
        else:
            vals = list(point)
        total = 0
        for e, c in self.terms.items():
            t = c
            for v, k in zip(vals, e):
                t = t * v ** k
            total = total + t
        return total

    # -- presentation -----------------------------------------------------
    def sorted_terms(self) -> list[tuple[Exponent, Fraction]]:
        """Terms by descending degree, then descending lexicographic exponent."""
        return sorted(self.terms.items(), key=lambda t: (-sum(t[0]), tuple(-k for k in t[0])))

    def _mono_str(self, e: Exponent) -> str:
        parts = []
        for name, k in zip(self.names, e):
            if k == 1:
                parts.append(name)
            elif k > 1:
                parts.append(f"{name}^{k}")
        return "*".join(parts)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        out = []
        for i, (e, c) in enumerate(self.sorted_terms()):
            sign = "-" if c < 0 else "+"
            a = abs(c)
            mono = self._mono_str(e)
            if not mono:
                body = str(a)
            elif a == 1:
                body = mono
            else:
                body = f"{a}*{mono}"
            if i == 0:
                out.append(("-" if sign == "-" else "") + body)
            else:
                out.append(f" {sign} {body}")
        return "".join(out)

    def __repr__(self) -> str:
        return f"Polynomial[{self.tag}]({self})"

    def term_list(self) -> str:
        """Machine-readable ``coeff:e1,e2,...`` items separated by ``;``."""
        return ";".join(f"{c}:{','.join(map(str, e))}" for e, c in self.sorted_terms())


class DiffOperator:
    """Finite sum ``sum_beta a_beta(y) d_y^beta`` with y-polynomial coefficients
    written to the left of the derivatives."""

    __slots__ = ("names", "terms")

    def __init__(self, names: Iterable[str], terms: Mapping[Exponent, Polynomial] | None = None):
        self.names = tuple(names)
        clean: dict[Exponent, Polynomial] = {}
        for beta, a in (terms or {}).items():
            beta = tuple(beta)
            if a.tag != "y":
                raise ValueError("operator coefficients must be y-polynomials")
            if beta in clean:
                a = clean[beta] + a
            if a:
                clean[beta] = a
            else:
                clean.pop(beta, None)
        self.terms = clean

    @classmethod
    def zero(cls, names) -> "DiffOperator":
        return cls(names)

    @classmethod
    def identity(cls, names) -> "DiffOperator":
        names = tuple(names)
        return cls(names, {(0,) * len(names): Polynomial.one(names, "y")})

    @classmethod
    def multiplication(cls, f: Polynomial) -> "DiffOperator":
        return cls(f.names, {(0,) * f.dim: f.retag("y")})

    @classmethod
    def partial(cls, names, i: int) -> "DiffOperator":
        names = tuple(names)
        beta = [0] * len(names)
        beta[i] = 1
        return cls(names, {tuple(beta): Polynomial.one(names, "y")})

    def order(self) -> int:
        return max((sum(b) for b in self.terms), default=-1)

    def coefficient_degree(self) -> int:
        return max((a.degree() for a in self.terms.values()), default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficients(self) -> Iterator[tuple[Exponent, Exponent, Fraction]]:
        """Yield ``(alpha, beta, c_alpha_beta)`` for every nonzero coefficient."""
        for beta, a in self.terms.items():
            for alpha, c in a.terms.items():
                yield alpha, beta, c

    def __call__(self, f: Polynomial) -> Polynomial:
        """Act on a y-polynomial function."""
        if f.tag != "y":
            raise ValueError("differential operators act on y-polynomials")
        out = Polynomial.zero(f.names, "y")
        for beta, a in self.terms.items():
            out = out + a * f.diff_multi(beta)
        return out

    def __add__(self, other: "DiffOperator") -> "DiffOperator":
        terms = dict(self.terms)
        for b, a in other.terms.items():
            terms[b] = terms[b] + a if b in terms else a
        return DiffOperator(self.names, terms)

    def __neg__(self) -> "DiffOperator":
        return DiffOperator(self.names, {b: -a for b, a in self.terms.items()})

    def __sub__(self, other: "DiffOperator") -> "DiffOperator":
        return self + (-other)

    def scale(self, c) -> "DiffOperator":
        return DiffOperator(self.names, {b: a.scale(c) for b, a in self.terms.items()})

    def compose(self, other: "DiffOperator") -> "DiffOperator":
        """Operator product ``self o other`` (apply ``other`` first)."""
        out: dict[Exponent, Polynomial] = {}
        for beta, a in self.terms.items():
            for gamma, b in other.terms.items():
                # Leibniz: d^beta (b d^gamma) = sum_mu C(beta,mu) (d^mu b) d^(beta-mu+gamma)
                for mu in itertools.product(*(range(k + 1) for k in beta)):
                    db = b.diff_multi(mu)
                    if not db:
                        continue
                    binom = 1
                    for k, m in zip(beta, mu):
                        binom *= math.comb(k, m)
                    key = tuple(bb - m + g for bb, m, g in zip(beta, mu, gamma))
                    term = (a * db).scale(binom)
                    out[key] = out[key] + term if key in out else term
        return DiffOperator(self.names, out)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiffOperator):
            return NotImplemented
        return self.names == other.names and self.terms == other.terms

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for beta in sorted(self.terms, key=lambda b: (-sum(b), tuple(-k for k in b))):
            d = "*".join(
                f"d_{n}" if k == 1 else f"d_{n}^{k}" for n, k in zip(self.names, beta) if k
            )
            parts.append(f"({self.terms[beta]})" + (f"*{d}" if d else ""))
        return " + ".join(parts)

    def __repr__(self) -> str:
        return f"DiffOperator({self})"


def pairing(p: Polynomial, f: Polynomial) -> Fraction:
    """``<p, f> = (p(d_y) f)(0)``, so that ``<x^a, y^b> = a! [a == b]``."""
    if p.tag != "x" or f.tag != "y":
        raise ValueError("pairing takes an x-polynomial and a y-polynomial")
    if p.names != f.names:
        raise ValueError("dimension mismatch in pairing")
    total = Fraction(0)
    for a, c in p.terms.items():
        v = f.terms.get(a)
        if v:
            total += c * v * _factorial_of(a)
    return total


def apply_right_operator(p: Polynomial, D: DiffOperator) -> Polynomial:
    """Right action ``p . D`` on distributions, defined by
    ``<p . D, f> = <p, D f>``.

    Under this pairing multiplication by ``y_i`` acts as ``d/dx_i`` and
    ``d/dy_i`` acts as multiplication by ``x_i``.
    """
    if p.tag != "x":
        raise ValueError("right action is defined on x-polynomials")
    out = Polynomial.zero(p.names, "x")
    for beta, a in D.terms.items():
        moved = a.retag("x").apply_as_operator(p)
        if moved:
            out = out + moved * Polynomial.monomial(p.names, beta, 1, "x")
    return out


def multiply_jet(p: Polynomial, series, order: int | None = None) -> Polynomial:
    """Product of the point-supported distribution ``p`` with a function jet.

    ``series`` is a y-polynomial (or anything with ``.poly`` and ``.order``)
    known exactly through degree ``order`` (a bare polynomial is exact to
    every order).  Only jet terms of degree at most
    ``deg p`` can contribute.
    """
    poly = getattr(series, "poly", series)
    if order is None:
        order = getattr(series, "order", None)
        if order is None:
            # a bare polynomial is an exact function, i.e. a jet of every order
            order = max(p.degree(), 0)
    if poly.tag != "y":
        raise ValueError("jet must be a y-polynomial")
    if order < p.degree():
        raise ValueError(f"jet order {order} insufficient for degree {p.degree()}")
    return poly.truncate(p.degree()).retag("x").apply_as_operator(p)


class PolyParseError(ValueError):
    pass


_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_]*)|(\^)|(\*)|(/)|(\+)|(-))")


def _tokenize(s: str) -> list[tuple[str, str]]:
    toks = []
    pos = 0
    s = s.rstrip()
    while pos < len(s):
        m = _TOKEN.match(s, pos)
        if not m or m.end() == pos:
            raise PolyParseError(f"unexpected character {s[pos:].strip()[:1]!r} at offset {pos}")
        kind = ["int", "id", "^", "*", "/", "+", "-"][m.lastindex - 1]
        toks.append((kind, m.group(m.lastindex)))
        pos = m.end()
    return toks


def parse_poly_expr(s: str, names: Iterable[str]) -> Polynomial:
    """Parse ``expr := term (('+'|'-') term)*`` into an exact x-polynomial.

    Terms are ``rat ('*' var)*`` or ``var ('*' var)*`` with
    ``var := name ('^' posint)?`` and ``rat := int | int '/' posint``.
    A single leading sign is accepted.
    """
    names = tuple(names)
    index = {n: i for i, n in enumerate(names)}
    toks = _tokenize(s)
    if not toks:
        raise PolyParseError("empty expression")
    pos = 0

    def peek():
        return toks[pos] if pos < len(toks) else (None, None)

    def take(kind):
        nonlocal pos
        k, v = peek()
        if k != kind:
            raise PolyParseError(f"expected {kind}, found {v if v is not None else 'end of input'!r}")
        pos += 1
        return v

    def parse_var(exps):
        name = take("id")
        if name not in index:
            raise PolyParseError(f"unknown identifier {name!r}; basis is {' '.join(names)}")
        k = 1
        if peek()[0] == "^":
            take("^")
            if peek()[0] == "-":
                raise PolyParseError(f"negative exponent on {name!r}")
            k = int(take("int"))
            if k <= 0:
                raise PolyParseError(f"exponent on {name!r} must be positive")
        exps[index[name]] += k

    def parse_term() -> Polynomial:
        exps = [0] * len(names)
        coeff = Fraction(1)
        if peek()[0] == "int":
            num = int(take("int"))
            if peek()[0] == "/":
                take("/")
                if peek()[0] != "int":
                    raise PolyParseError("malformed rational: denominator must be a positive integer")
                den = int(take("int"))
                if den == 0:
                    raise PolyParseError("malformed rational: zero denominator")
                coeff = Fraction(num, den)
            else:
                coeff = Fraction(num)
        else:
            parse_var(exps)
        while peek()[0] == "*":
            take("*")
            parse_var(exps)
        return Polynomial(names, {tuple(exps): coeff}, "x")

    total = Polynomial.zero(names)
    sign = 1
    if peek()[0] in ("+", "-"):
        sign = -1 if take(peek()[0]) == "-" else 1
    total = total + parse_term().scale(sign)
    while pos < len(toks):
        k, _ = peek()
        if k not in ("+", "-"):
            raise PolyParseError(f"expected '+' or '-', found {toks[pos][1]!r}")
        take(k)
        total = total + parse_term().scale(-1 if k == "-" else 1)
    return total
