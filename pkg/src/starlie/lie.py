"""Finite-dimensional Lie algebras over Q: loading, validation,
normalization, adjoint vector fields and invariant polynomials."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import sympy

from .poly import DiffOperator, Polynomial, apply_right_operator, monomials

__all__ = [
    "AlgebraError",
    "LieAlgebra",
    "InvariantBasis",
    "load_algebra",
    "load_bundled",
    "resolve_algebra",
    "BUNDLED",
    "normalize_constants",
    "trace_power_poly",
    "adjoint_field",
    "is_invariant",
    "find_invariants",
]

BUNDLED = ("sl2", "heis3", "abelian3", "solv2")


class AlgebraError(ValueError):
    pass


@dataclass(frozen=True)
class LieAlgebra:
    """Structure constants are stored sparsely for ``i < j`` only:
    ``constants[(i, j)] = {k: c_ij^k}``."""

    name: str
    basis: tuple[str, ...]
    constants: dict[tuple[int, int], dict[int, Fraction]] = field(hash=False, compare=True)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def c(self, i: int, j: int, k: int) -> Fraction:
        if i == j:
            return Fraction(0)
        if i < j:
            return self.constants.get((i, j), {}).get(k, Fraction(0))
        return -self.constants.get((j, i), {}).get(k, Fraction(0))

    def bracket_vector(self, i: int, j: int) -> dict[int, Fraction]:
        if i == j:
            return {}
        if i < j:
            return dict(self.constants.get((i, j), {}))
        return {k: -v for k, v in self.constants.get((j, i), {}).items()}

    def bracket_poly(self, i: int, j: int, tag: str = "x") -> Polynomial:
        """``[x_i, x_j]`` as a linear polynomial."""
        terms = {}
        for k, v in self.bracket_vector(i, j).items():
            e = [0] * self.dim
            e[k] = 1
            terms[tuple(e)] = v
        return Polynomial(self.basis, terms, tag)

    def max_abs_constant(self) -> Fraction:
        return max((abs(v) for row in self.constants.values() for v in row.values()),
                   default=Fraction(0))

    def is_abelian(self) -> bool:
        return not any(v for row in self.constants.values() for v in row.values())

    def jacobi_violations(self) -> list[tuple[int, int, int, int, Fraction]]:
        d = self.dim
        bad = []
        for i, j, k in itertools.combinations(range(d), 3):
            for l in range(d):
                s = Fraction(0)
                for m in range(d):
                    s += (self.c(i, j, m) * self.c(m, k, l) + self.c(j, k, m) * self.c(m, i, l)
                          + self.c(k, i, m) * self.c(m, j, l))
                if s:
                    bad.append((i, j, k, l, s))
        return bad

    def index(self, name: str) -> int:
        try:
            return self.basis.index(name)
        except ValueError:
            raise AlgebraError(f"unknown basis element {name!r}") from None

    def to_text(self) -> str:
        lines = [f"algebra {self.name}", f"dim {self.dim}", "basis " + " ".join(self.basis)]
        for (i, j), row in sorted(self.constants.items()):
            rhs = " ".join(f"{v} {self.basis[k]}" for k, v in sorted(row.items()))
            lines.append(f"bracket {self.basis[i]} {self.basis[j]} -> {rhs}")
        return "\n".join(lines) + "\n"


def _parse_rat(tok: str, lineno: int) -> Fraction:
    try:
        if "/" in tok:
            p, q = tok.split("/")
            if int(q) <= 0:
                raise ValueError
            return Fraction(int(p), int(q))
        return Fraction(int(tok))
    except ValueError:
        raise AlgebraError(f"line {lineno}: malformed rational {tok!r}") from None


def load_algebra(document: str) -> LieAlgebra:
    """Parse an algebra file and validate antisymmetry and Jacobi."""
    name = None
    dim = None
    basis: list[str] | None = None
    given: dict[tuple[int, int], dict[int, Fraction]] = {}
    for lineno, raw in enumerate(document.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        if head == "algebra":
            if len(rest) != 1:
                raise AlgebraError(f"line {lineno}: expected 'algebra <name>'")
            name = rest[0]
        elif head == "dim":
            if len(rest) != 1 or not rest[0].isdigit() or int(rest[0]) <= 0:
                raise AlgebraError(f"line {lineno}: expected 'dim <positive integer>'")
            dim = int(rest[0])
        elif head == "basis":
            if len(set(rest)) != len(rest) or not rest:
                raise AlgebraError(f"line {lineno}: basis names must be distinct and nonempty")
            basis = rest
        elif head == "bracket":
            if basis is None:
                raise AlgebraError(f"line {lineno}: bracket before basis")
            if len(rest) < 3 or rest[2] != "->" or len(rest) % 2 != 1:
                raise AlgebraError(f"line {lineno}: expected 'bracket <a> <b> -> <rat> <c> ...'")
            a, b = rest[0], rest[1]
            for nm in (a, b):
                if nm not in basis:
                    raise AlgebraError(f"line {lineno}: unknown basis element {nm!r}")
            i, j = basis.index(a), basis.index(b)
            if i == j:
                raise AlgebraError(f"line {lineno}: bracket of an element with itself")
            vec: dict[int, Fraction] = {}
            pairs = rest[3:]
            for t in range(0, len(pairs), 2):
                coef = _parse_rat(pairs[t], lineno)
                tgt = pairs[t + 1]
                if tgt not in basis:
                    raise AlgebraError(f"line {lineno}: unknown basis element {tgt!r}")
                k = basis.index(tgt)
                vec[k] = vec.get(k, Fraction(0)) + coef
            vec = {k: v for k, v in vec.items() if v}
            if (i, j) in given:
                raise AlgebraError(f"line {lineno}: bracket [{a},{b}] given twice")
            given[(i, j)] = vec
        else:
            raise AlgebraError(f"line {lineno}: unknown directive {head!r}")
    if name is None or dim is None or basis is None:
        raise AlgebraError("algebra file needs 'algebra', 'dim' and 'basis' lines")
    if len(basis) != dim:
        raise AlgebraError(f"dim {dim} does not match {len(basis)} basis names")

    seen: dict[tuple[int, int], dict[int, Fraction]] = {}
    for (i, j), vec in given.items():
        key, sgn = ((i, j), 1) if i < j else ((j, i), -1)
        oriented = {k: sgn * v for k, v in vec.items()}
        if key in seen and seen[key] != oriented:
            a, b = basis[key[0]], basis[key[1]]
            raise AlgebraError(f"antisymmetry conflict: [{a},{b}] and [{b},{a}] disagree")
        seen[key] = oriented
    constants = {key: vec for key, vec in seen.items() if vec}
    alg = LieAlgebra(name, tuple(basis), constants)
    bad = alg.jacobi_violations()
    if bad:
        i, j, k, l, s = bad[0]
        raise AlgebraError(
            f"Jacobi violation at (i,j,k,l)=({basis[i]},{basis[j]},{basis[k]},{basis[l]}): sum {s}")
    return alg


def load_bundled(name: str) -> LieAlgebra:
    text = resources.files("starlie").joinpath("data").joinpath(f"{name}.alg").read_text("utf-8")
    return load_algebra(text)


def resolve_algebra(spec: str) -> LieAlgebra:
    """A bundled algebra name or a path to an algebra file."""
    if spec in BUNDLED:
        return load_bundled(spec)
    path = Path(spec)
    if not path.exists():
        raise AlgebraError(f"no bundled algebra or file named {spec!r}")
    return load_algebra(path.read_text("utf-8"))


def rescale(L: LieAlgebra, lam: Fraction) -> LieAlgebra:
    """Algebra in the basis ``lam * x_i``; constants scale by ``lam``."""
    lam = Fraction(lam)
    return LieAlgebra(L.name, L.basis,
                      {key: {k: v * lam for k, v in row.items()} for key, row in L.constants.items()})


def normalize_constants(L: LieAlgebra) -> tuple[LieAlgebra, Fraction]:
    """Rescale the basis uniformly so that the largest ``|c_ij^k|`` equals 2."""
    m = L.max_abs_constant()
    if m == 0:
        return L, Fraction(1)
    lam = Fraction(2) / m
    return rescale(L, lam), lam


def adjoint_matrix(L: LieAlgebra, tag: str = "y") -> list[list[Polynomial]]:
    """Symbolic matrix of ``ad v`` for ``v = sum_i v_i x_i``; entry ``[k][j]``
    is the coefficient of ``x_k`` in ``[v, x_j]``."""
    d = L.dim
    M = [[Polynomial.zero(L.basis, tag) for _ in range(d)] for _ in range(d)]
    for i in range(d):
        vi = Polynomial.var(L.basis, i, tag)
        for j in range(d):
            for k, c in L.bracket_vector(i, j).items():
                M[k][j] = M[k][j] + vi.scale(c)
    return M


def trace_power_poly(L: LieAlgebra, k: int) -> Polynomial:
    """``tr[(ad v)^(2k)]`` as a homogeneous y-polynomial of degree ``2k``."""
    if k < 1:
        raise ValueError("k must be positive")
    M = adjoint_matrix(L)
    d = L.dim
    P = M
    for _ in range(2 * k - 1):
        P = [[sum((P[r][t] * M[t][s] for t in range(d)), Polynomial.zero(L.basis, "y"))
              for s in range(d)] for r in range(d)]
    return sum((P[r][r] for r in range(d)), Polynomial.zero(L.basis, "y"))


def adjoint_field(L: LieAlgebra, a: int) -> DiffOperator:
    """``adj_a f(v) = d/dt f(exp(-t a) . v)`` at ``t = 0``, i.e. the vector field
    ``-sum_{j,k} c_aj^k y_j d/dy_k``."""
    d = L.dim
    terms = {}
    for k in range(d):
        coeff = Polynomial.zero(L.basis, "y")
        for j in range(d):
            c = L.c(a, j, k)
            if c:
                coeff = coeff - Polynomial.var(L.basis, j, "y").scale(c)
        if coeff:
            beta = [0] * d
            beta[k] = 1
            terms[tuple(beta)] = coeff
    return DiffOperator(L.basis, terms)


def _annihilated(L: LieAlgebra, p: Polynomial) -> bool:
    for a in range(L.dim):
        D = adjoint_field(L, a)
        out = apply_right_operator(p, D) if p.tag == "x" else D(p)
        if out:
            return False
    return True


def is_invariant(L: LieAlgebra, p: Polynomial) -> bool:
    """``p . adj_a = 0`` for every basis element (x-polynomials act on the
    right; y-polynomials are functions and are differentiated directly)."""
    if p.names != L.basis:
        raise ValueError("polynomial is not expressed in this algebra's coordinates")
    return _annihilated(L, p)


@dataclass
class InvariantBasis:
    degree: int
    elements: list[Polynomial]

    def __iter__(self):
        return iter(self.elements)

    def __len__(self):
        return len(self.elements)

    def contains(self, p: Polynomial) -> bool:
        """Whether ``p`` lies in the span of the basis."""
        return _in_span(self.elements, p)


def _in_span(elements: list[Polynomial], p: Polynomial) -> bool:
    keys = sorted({e for q in elements + [p] for e in q.terms})
    if not keys:
        return True
    A = sympy.Matrix([[sympy.Rational(q.coeff(e)) for q in elements] for e in keys]) \
        if elements else sympy.zeros(len(keys), 0)
    b = sympy.Matrix([sympy.Rational(p.coeff(e)) for e in keys])
    r = A.rank() if elements else 0
    return A.row_join(b).rank() == r


def _primitive(vec: list[Fraction]) -> list[Fraction]:
    """Scale to coprime integers with a positive first nonzero entry."""
    from math import gcd, lcm
    den = 1
    for v in vec:
        den = lcm(den, v.denominator)
    ints = [int(v * den) for v in vec]
    g = 0
    for v in ints:
        g = gcd(g, v)
    g = g or 1
    first = next((v for v in ints if v), 1)
    sgn = 1 if first > 0 else -1
    return [Fraction(sgn * v, g) for v in ints]


def find_invariants(L: LieAlgebra, d: int) -> InvariantBasis:
    """Exact basis of the invariant x-polynomials of degree at most ``d``.

    The adjoint action preserves degree, so the kernel is computed one
    homogeneous degree at a time.
    """
    if d < 0:
        raise ValueError("degree bound must be nonnegative")
    fields = [adjoint_field(L, a) for a in range(L.dim)]
    elements: list[Polynomial] = []
    for k in range(d + 1):
        monos = list(monomials(L.dim, k))
        rows: dict[tuple, list] = {}
        for col, e in enumerate(monos):
            p = Polynomial.monomial(L.basis, e)
            for a, D in enumerate(fields):
                for out_e, c in apply_right_operator(p, D).terms.items():
                    rows.setdefault((a, out_e), [0] * len(monos))[col] = sympy.Rational(c)
        if rows:
            null = sympy.Matrix(list(rows.values())).nullspace()
        else:
            null = [sympy.Matrix([1 if r == c else 0 for r in range(len(monos))])
                    for c in range(len(monos))]
        vecs = []
        for v in null:
            vec = [Fraction(int(x.p), int(x.q)) for x in v]
            vecs.append(_primitive(vec))
        for vec in sorted(vecs, key=lambda v: [-abs(x) for x in v]):
            elements.append(Polynomial(L.basis, dict(zip(monos, vec)), "x"))
    return InvariantBasis(d, elements)
