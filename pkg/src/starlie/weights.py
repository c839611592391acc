"""Graph weights: hyperbolic angles, the pulled-back torus volume form on the
gauge-fixed configuration space, Monte Carlo integration, rational
reconstruction of the low-order table, and the on-disk cache.

Gauges: for graphs with two ground vertices the ground points sit at 0 and 1,
so the integration domain is H^n with coordinates (Re p1, Im p1, Re p2, ...).
For wheels the hub is pinned at ``i`` and the rim points range over H^k.
"""

from __future__ import annotations

import cmath
import itertools
import logging
import math
import os
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .graphs import AdmissibleGraph, encode, enumerate_graphs, parse, relabel

log = logging.getLogger(__name__)

__all__ = [
    "DimensionMismatch",
    "DegenerateConfiguration",
    "ReconstructionError",
    "ConfigurationPoint",
    "WeightEstimate",
    "WeightTable",
    "WeightCache",
    "INTEGRATOR_VERSION",
    "ORIENTATION",
    "hyperbolic_angle",
    "pullback_density",
    "finite_difference_density",
    "mc_weight",
    "orbit",
    "reconstruct_rational",
    "solve_low_order_table",
    "load_default_table",
    "default_workers",
]

INTEGRATOR_VERSION = "mc-cauchy-v1"
BLOCK = 1 << 14
# Orientation of H^n from the coordinate order (Re p1, Im p1, ...); the wedge
# anchor w(K1:(L,R)) - w(K1:(R,L)) = +1 holds with this sign.
ORIENTATION = 1
GROUND = {"L": 0.0 + 0.0j, "R": 1.0 + 0.0j}
HUB = 1j


class DimensionMismatch(ValueError):
    """Form degree differs from the domain dimension; the weight is 0."""


class DegenerateConfiguration(ValueError):
    pass


class ReconstructionError(ValueError):
    pass


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("STARLIE_WORKERS", "1")))
    except ValueError:
        return 1


def hyperbolic_angle(z1: complex, z2: complex) -> float:
    """Angle at ``z1`` between the geodesic to ``z2`` and the vertical line,
    ``(1/2i) Log[(z2-z1)(conj z2-z1) / ((z2-conj z1)(conj z2-conj z1))]``
    on the principal branch, reduced to ``[0, 2 pi)``."""
    z1, z2 = complex(z1), complex(z2)
    if z1.imag <= 0:
        raise ValueError("first point must lie in the open upper half-plane")
    if z2.imag < 0:
        raise ValueError("second point must lie in the closed upper half-plane")
    if abs(z1 - z2) == 0:
        raise ValueError("coincident points")
    ratio = ((z2 - z1) * (z2.conjugate() - z1)) / ((z2 - z1.conjugate()) * (z2.conjugate() - z1.conjugate()))
    # +0.0 clears a negative-zero imaginary part so Log(-1) = i pi on the principal branch
    ratio = complex(ratio.real, ratio.imag + 0.0)
    phi = (cmath.log(ratio) / 2j).real
    return phi % (2 * math.pi)


@dataclass(frozen=True)
class ConfigurationPoint:
    """Free aerial points in the chosen gauge (the fixed points are implied)."""

    points: tuple[complex, ...]

    def __post_init__(self):
        for p in self.points:
            if complex(p).imag <= 0:
                raise DegenerateConfiguration(f"point {p} is not in the upper half-plane")


def _domain(g: AdmissibleGraph) -> tuple[int, int]:
    """``(free points, domain dimension)`` for the gauge used with ``g``."""
    if g.m == 2:
        return g.n, 2 * g.n
    return g.n - 1, 2 * (g.n - 1)


def _edge_spec(g: AdmissibleGraph) -> list[tuple[int, object]]:
    """Edges as (free source index, target) where target is a free index or a
    fixed complex point."""
    free, _ = _domain(g)
    spec = []
    for src, t in g.edges():
        s = src - 1
        if s >= free:
            raise DimensionMismatch("edges leave a gauge-fixed vertex")
        if isinstance(t, str):
            spec.append((s, GROUND[t]))
        elif t - 1 >= free:
            spec.append((s, HUB))
        else:
            spec.append((s, t - 1))
    return spec


def _check_dimension(g: AdmissibleGraph) -> None:
    _, dim = _domain(g)
    if g.edge_count != dim:
        raise DimensionMismatch(
            f"{encode(g)}: form degree {g.edge_count} != domain dimension {dim}")


def _jacobian(spec, z: np.ndarray) -> np.ndarray:
    """Jacobian of the edge angles w.r.t. (Re p, Im p) of every free point.

    ``z`` has shape (N, free).  The angle is ``arg((z2 - z1)/(z2 - conj z1))``,
    which agrees with :func:`hyperbolic_angle` modulo pi.
    """
    N, free = z.shape
    J = np.zeros((N, len(spec), 2 * free))
    for r, (s, t) in enumerate(spec):
        z1 = z[:, s]
        z2 = z[:, t] if isinstance(t, int) else np.full(N, complex(t))
        a = 1.0 / (z2 - z1)
        b = 1.0 / (z2 - np.conj(z1))
        J[:, r, 2 * s] += np.imag(b - a)
        J[:, r, 2 * s + 1] += np.imag(-1j * a - 1j * b)
        if isinstance(t, int):
            J[:, r, 2 * t] += np.imag(a - b)
            J[:, r, 2 * t + 1] += np.imag(1j * a - 1j * b)
    return J


def _density_batch(spec, z: np.ndarray) -> np.ndarray:
    k = len(spec)
    return ORIENTATION * np.linalg.det(_jacobian(spec, z)) / (2 * math.pi) ** k


def pullback_density(g: AdmissibleGraph, c: ConfigurationPoint | tuple) -> float:
    """``det J / (2 pi)^k`` at one configuration, ``J`` being the Jacobian of
    the edge angles (edge order e_1^1, e_1^2, ...) in the real coordinates."""
    _check_dimension(g)
    if not isinstance(c, ConfigurationPoint):
        c = ConfigurationPoint(tuple(c))
    free, _ = _domain(g)
    if len(c.points) != free:
        raise ValueError(f"expected {free} free points, got {len(c.points)}")
    fixed = list(GROUND.values()) if g.m == 2 else [HUB]
    pts = [complex(p) for p in c.points] + fixed
    for a, b in itertools.combinations(pts, 2):
        if abs(a - b) < 1e-12:
            raise DegenerateConfiguration(f"points {a} and {b} coincide")
    z = np.array([c.points], dtype=complex)
    return float(_density_batch(_edge_spec(g), z)[0])


def finite_difference_density(g: AdmissibleGraph, c: ConfigurationPoint | tuple,
                              h: float = 1e-6) -> float:
    """Central-difference Jacobian of :func:`hyperbolic_angle`; the oracle for
    :func:`pullback_density`."""
    _check_dimension(g)
    pts = [complex(p) for p in (c.points if isinstance(c, ConfigurationPoint) else c)]
    spec = _edge_spec(g)

    def angles(ps):
        out = []
        for s, t in spec:
            z2 = ps[t] if isinstance(t, int) else t
            out.append(hyperbolic_angle(ps[s], z2))
        return np.array(out)

    free = len(pts)
    J = np.zeros((len(spec), 2 * free))
    for col in range(2 * free):
        step = h if col % 2 == 0 else 1j * h
        plus = list(pts)
        minus = list(pts)
        plus[col // 2] += step
        minus[col // 2] -= step
        diff = angles(plus) - angles(minus)
        # the angle is only defined modulo pi by the principal-branch formula
        diff = (diff + math.pi / 2) % math.pi - math.pi / 2
        J[:, col] = diff / (2 * h)
    return ORIENTATION * float(np.linalg.det(J)) / (2 * math.pi) ** len(spec)


@dataclass(frozen=True)
class WeightEstimate:
    mean: float
    stderr: float
    samples: int
    seed: int
    graph: str
    version: str = INTEGRATOR_VERSION

    def __str__(self) -> str:
        return f"{self.mean:.6g} ± {self.stderr:.3g} ({self.samples} samples, seed {self.seed})"

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - float(value)) <= k * self.stderr


def _block_sums(args) -> list[tuple[float, float]]:
    enc, seed, samples, blocks = args
    g = parse(enc)
    spec = _edge_spec(g)
    free, _ = _domain(g)
    key = zlib.crc32(enc.encode())
    out = []
    for b in blocks:
        size = min(BLOCK, samples - b * BLOCK)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key, b)))
        u = rng.random((size, free))
        v = rng.random((size, free))
        # Cauchy in Re p, v/(1-v) in Im p; pdf = 1/(pi(1+x^2)) * 1/(1+y)^2
        x = np.tan(np.pi * (u - 0.5))
        y = v / (1.0 - v)
        pdf = np.prod(1.0 / (np.pi * (1.0 + x * x)) / (1.0 + y) ** 2, axis=1)
        vals = _density_batch(spec, x + 1j * y) / pdf
        vals = np.where(np.isfinite(vals), vals, 0.0)
        out.append((float(np.sum(vals)), float(np.sum(vals * vals))))
    return out


def mc_weight(g: AdmissibleGraph, samples: int, seed: int, workers: int = 1) -> WeightEstimate:
    """Importance-sampled estimate of the weight of ``g``.

    Samples are generated in fixed blocks whose random streams depend only
    on ``(seed, graph, block index)``; block sums are merged in block order,
    so the result is bit-identical for any number of workers.
    """
    enc = encode(g)
    try:
        _check_dimension(g)
    except DimensionMismatch:
        return WeightEstimate(0.0, 0.0, samples, seed, enc)
    if samples < 10_000:
        raise ValueError("mc_weight needs at least 10^4 samples")
    nblocks = -(-samples // BLOCK)
    blocks = list(range(nblocks))
    if workers > 1 and nblocks > 1:
        chunks = [blocks[i::workers] for i in range(workers)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=len(chunks)) as ex:
            parts = list(ex.map(_block_sums, [(enc, seed, samples, c) for c in chunks]))
        by_block = {}
        for c, part in zip(chunks, parts):
            by_block.update(zip(c, part))
        sums = [by_block[b] for b in blocks]
    else:
        sums = _block_sums((enc, seed, samples, blocks))
    s1 = 0.0
    s2 = 0.0
    for a, b in sums:
        s1 += a
        s2 += b
    mean = s1 / samples
    var = max(s2 / samples - mean * mean, 0.0) * samples / (samples - 1)
    return WeightEstimate(mean, math.sqrt(var / samples), samples, seed, enc)


def orbit(g: AdmissibleGraph) -> dict[str, int]:
    """Graphs related to ``g`` by relabeling aerial vertices and reordering the
    edges at a vertex, with the sign relating their weights to ``w(g)``.

    A graph reached with both signs maps to 0 (its weight is forced to vanish).
    """
    out: dict[str, int] = {}
    for perm in itertools.permutations(range(1, g.n + 1)):
        h = relabel(g, perm)
        for flips in itertools.product((False, True), repeat=g.n):
            edges = tuple(tuple(reversed(e)) if f else e for e, f in zip(h.out_edges, flips))
            sign = -1 if sum(flips) % 2 else 1
            enc = encode(AdmissibleGraph(g.n, g.m, edges))
            if enc in out and out[enc] != sign:
                out[enc] = 0
            else:
                out.setdefault(enc, sign)
    return out


def reconstruct_rational(mean: float, stderr: float, tolerance: float = 3.0,
                         denominator: int = 96) -> Fraction:
    """The unique multiple of ``1/denominator`` within ``tolerance * stderr``."""
    lo = mean - tolerance * stderr
    hi = mean + tolerance * stderr
    cands = [Fraction(j, denominator) for j in range(math.ceil(lo * denominator),
                                                     math.floor(hi * denominator) + 1)]
    if not cands:
        raise ReconstructionError(
            f"no rational with denominator dividing {denominator} within {tolerance}·stderr of {mean}")
    if len(cands) > 1:
        raise ReconstructionError(
            f"MC budget too small: {len(cands)} candidates within {tolerance}·stderr of {mean}")
    return cands[0]


@dataclass
class WeightTable:
    """Exact weights keyed by canonical encoding, covering orders ``n <= max_n``."""

    weights: dict[str, Fraction]
    max_n: int
    provenance: dict[str, str] = field(default_factory=dict)
    estimates: dict[str, WeightEstimate] = field(default_factory=dict)

    def weight(self, g: AdmissibleGraph | str) -> Fraction:
        enc = g if isinstance(g, str) else encode(g)
        try:
            return self.weights[enc]
        except KeyError:
            raise KeyError(f"no weight for {enc}") from None

    def covers(self, n: int) -> bool:
        return n <= self.max_n

    def to_lines(self) -> list[str]:
        lines = [f"# exact weight table, orders n <= {self.max_n}"]
        for enc in sorted(self.weights, key=lambda e: (int(e[1:].split(":")[0]), e)):
            lines.append(f"{enc} exact {self.weights[enc]} {self.provenance.get(enc, '-')}")
        return lines

    def summary(self) -> str:
        sources = sorted({p.split(";")[0] for p in self.provenance.values()})
        return f"n<={self.max_n}, {len(self.weights)} entries, sources: {', '.join(sources)}"


def _order(enc: str) -> int:
    return int(enc[1:].split(":")[0]) if enc[0] in "KH" else int(enc[1:]) + 1


def table_from_lines(lines) -> WeightTable:
    weights: dict[str, Fraction] = {}
    prov: dict[str, str] = {}
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 3)
        if len(parts) < 3 or parts[1] != "exact":
            continue
        weights[parts[0]] = Fraction(parts[2])
        prov[parts[0]] = parts[3] if len(parts) > 3 else "-"
    max_n = -1
    for n in range(0, 6):
        encs = {encode(g) for g in enumerate_graphs(n, "A")} if n <= 3 else None
        if encs is None or not encs <= set(weights):
            break
        max_n = n
    return WeightTable(weights, max_n, prov)


def load_default_table() -> WeightTable:
    """The bundled exact table for n <= 2."""
    text = resources.files("starlie").joinpath("data").joinpath("weights.tbl").read_text("utf-8")
    return table_from_lines(text.splitlines())


def solve_low_order_table(samples: int = 1_000_000, seed: int = 20240, tolerance: float = 3.0,
                          workers: int = 1, max_n: int = 2, validate: bool = True) -> WeightTable:
    """Reconstruct exact weights for all of A_0 .. A_max_n from MC data.

    One MC run per symmetry orbit (``samples`` per orbit member, pooled on the
    orbit representative); each rational is the unique multiple of 1/96 within
    ``tolerance`` standard errors.  The empty graph has weight 1.
    """
    weights: dict[str, Fraction] = {"K0:": Fraction(1)}
    prov: dict[str, str] = {"K0:": "definition;n=0 term is the plain product"}
    estimates: dict[str, WeightEstimate] = {}
    for n in range(1, max_n + 1):
        pending = {encode(g) for g in enumerate_graphs(n, "A")}
        while pending:
            enc = min(pending)
            orb = orbit(parse(enc))
            members = {e: s for e, s in orb.items() if e in pending}
            rep = enc
            if any(s == 0 for s in orb.values()):
                for e in members:
                    weights[e] = Fraction(0)
                    prov[e] = f"symmetry;odd automorphism of {rep}"
                pending -= set(members)
                continue
            est = mc_weight(parse(rep), samples * len(orb), seed, workers)
            estimates[rep] = est
            value = reconstruct_rational(est.mean, est.stderr, tolerance)
            log.info("orbit %s (%d graphs): %s -> %s", rep, len(orb), est, value)
            for e, s in members.items():
                weights[e] = s * value
                prov[e] = (f"mc-orbit;rep={rep};sign={s:+d};mean={est.mean:.6f};"
                           f"stderr={est.stderr:.2g};N={est.samples};seed={seed}")
            pending -= set(members)
    table = WeightTable(weights, max_n, prov, estimates)
    anchor = table.weight("K1:(L,R)") - table.weight("K1:(R,L)") if max_n >= 1 else 1
    if anchor != 1:
        raise ReconstructionError(f"wedge anchor gives {anchor}, expected 1 (orientation)")
    if validate:
        from .starprod import validate_table

        problems = validate_table(table)
        if problems:
            raise ReconstructionError("constraint suite failed: " + "; ".join(problems))
    return table


class WeightCache:
    """Line-oriented cache: ``<enc> exact <p>/<q> <provenance>`` or
    ``<enc> mc <mean> <stderr> <samples> <seed> <integrator-version>``."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)

    def _read(self) -> list[str]:
        if not self.path.exists():
            return []
        return self.path.read_text("utf-8").splitlines()

    def store(self, entry: WeightTable | WeightEstimate) -> None:
        lines = self._read()
        if isinstance(entry, WeightTable):
            new = {enc: f"{enc} exact {w} {entry.provenance.get(enc, '-')}"
                   for enc, w in entry.weights.items()}
            kind = "exact"
        else:
            new = {entry.graph: (f"{entry.graph} mc {entry.mean!r} {entry.stderr!r} "
                                 f"{entry.samples} {entry.seed} {entry.version}")}
            kind = "mc"
        kept = []
        for line in lines:
            parts = line.split()
            if len(parts) >= 2 and parts[0] in new and parts[1] == kind:
                if kind == "exact" or parts[4:6] == new[parts[0]].split()[4:6]:
                    continue
            kept.append(line)
        kept.extend(new.values())
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("\n".join(kept) + "\n", "utf-8")

    def load(self, key: str, samples: int | None = None, seed: int | None = None):
        """Exact entry if present, otherwise a matching MC entry, else None."""
        mc = None
        for line in self._read():
            parts = line.split()
            if not parts or parts[0] != key or line.startswith("#"):
                continue
            if parts[1] == "exact":
                return Fraction(parts[2])
            if parts[1] == "mc" and len(parts) == 7:
                if parts[6] != INTEGRATOR_VERSION:
                    warnings.warn(f"cache entry for {key} has integrator version {parts[6]}, "
                                  f"expected {INTEGRATOR_VERSION}; ignored", stacklevel=2)
                    continue
                est = WeightEstimate(float(parts[2]), float(parts[3]), int(parts[4]),
                                     int(parts[5]), key, parts[6])
                if (samples is None or est.samples == samples) and (seed is None or est.seed == seed):
                    mc = est
        return mc

    def entries(self) -> list[str]:
        return [line for line in self._read() if line.strip() and not line.startswith("#")]
