"""Admissible graphs: the classes G_n and A_n, wheels, and the canonical
text encoding ``K<n>:(t,u);(t,u);...``."""

from __future__ import annotations

import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Union

__all__ = [
    "GraphError",
    "AdmissibleGraph",
    "Target",
    "enumerate_graphs",
    "wheel",
    "encode",
    "parse",
    "relabel",
    "is_wheel",
    "DEFAULT_CEILING",
]

Target = Union[int, str]  # first-type vertex number (1-based), or "L" / "R"
DEFAULT_CEILING = 5


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class AdmissibleGraph:
    """``out_edges[i]`` is the ordered edge list of first-type vertex ``i + 1``.

    With ``m == 2`` the second-type vertices are ``"L"`` and ``"R"``.  With
    ``m == 0`` the last first-type vertex is the passive one (a wheel hub).
    """

    n: int
    m: int
    out_edges: tuple[tuple[Target, ...], ...]

    def __post_init__(self):
        validate(self)

    @property
    def vertices(self) -> int:
        return len(self.out_edges)

    @property
    def edge_count(self) -> int:
        return sum(len(e) for e in self.out_edges)

    def edges(self) -> list[tuple[int, Target]]:
        """Edges as ``(source, target)`` in the fixed order e_1^1, e_1^2, ..."""
        return [(i + 1, t) for i, targets in enumerate(self.out_edges) for t in targets]

    def in_degree(self, v: int) -> int:
        return sum(1 for _, t in self.edges() if t == v)

    def __str__(self) -> str:
        return encode(self)


def validate(g: AdmissibleGraph) -> None:
    if g.m not in (0, 2):
        raise GraphError(f"unsupported number of second-type vertices: {g.m}")
    if g.n < 0 or g.n != len(g.out_edges):
        raise GraphError("vertex count does not match edge lists")
    grounds = ("L", "R") if g.m == 2 else ()
    seen = set()
    for i, targets in enumerate(g.out_edges, 1):
        if len(set(targets)) != len(targets):
            raise GraphError(f"vertex {i} has repeated targets {targets}")
        for t in targets:
            if isinstance(t, str):
                if t not in grounds:
                    raise GraphError(f"vertex {i}: unknown second-type target {t!r}")
            elif isinstance(t, int) and not isinstance(t, bool):
                if t == i:
                    raise GraphError(f"vertex {i}: loop")
                if not 1 <= t <= g.n:
                    raise GraphError(f"vertex {i}: target {t} out of range")
            else:
                raise GraphError(f"vertex {i}: bad target {t!r}")
            if (i, t) in seen:
                raise GraphError(f"repeated edge ({i},{t})")
            seen.add((i, t))


def is_in_class(g: AdmissibleGraph, cls: str) -> bool:
    if g.m != 2 or any(len(e) != 2 for e in g.out_edges):
        return False
    if cls == "G":
        return True
    if cls == "A":
        return all(g.in_degree(v) <= 1 for v in range(1, g.n + 1))
    raise GraphError(f"unknown graph class {cls!r}")


def _choices(n: int, v: int) -> list[tuple[Target, Target]]:
    pool: list[Target] = ["L", "R"] + [j for j in range(1, n + 1) if j != v]
    return [(a, b) for a in pool for b in pool if a != b]


def _extend(n: int, cls: str, prefix: tuple, incoming: tuple) -> list[tuple]:
    v = len(prefix) + 1
    if v > n:
        return [prefix]
    out = []
    for a, b in _choices(n, v):
        inc = list(incoming)
        ok = True
        for t in (a, b):
            if isinstance(t, int):
                inc[t - 1] += 1
                if cls == "A" and inc[t - 1] > 1:
                    ok = False
        if ok:
            out.extend(_extend(n, cls, prefix + ((a, b),), tuple(inc)))
    return out


def _partition(args) -> list[tuple]:
    n, cls, first = args
    inc = [0] * n
    for t in first:
        if isinstance(t, int):
            inc[t - 1] += 1
    if cls == "A" and max(inc, default=0) > 1:
        return []
    return _extend(n, cls, (first,), tuple(inc))


def enumerate_graphs(n: int, cls: str = "A", ceiling: int = DEFAULT_CEILING,
                     workers: int = 1) -> list[AdmissibleGraph]:
    """All labeled graphs of class ``"G"`` or ``"A"`` with ``n`` aerial vertices.

    For class A the in-degree constraint is enforced while extending partial
    graphs.  The search is split by the first vertex's edge choice; output is
    sorted by canonical encoding regardless of ``workers``.
    """
    if cls not in ("G", "A"):
        raise GraphError(f"unknown graph class {cls!r}")
    if n < 0:
        raise GraphError("n must be nonnegative")
    if n > ceiling:
        raise GraphError(f"n={n} exceeds the enumeration ceiling {ceiling}")
    if n == 0:
        return [AdmissibleGraph(0, 2, ())]
    tasks = [(n, cls, first) for first in _choices(n, 1)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_partition, tasks))
    else:
        parts = [_partition(t) for t in tasks]
    graphs = [AdmissibleGraph(n, 2, edges) for part in parts for edges in part]
    graphs.sort(key=encode)
    return graphs


def wheel(k: int) -> AdmissibleGraph:
    """Rim vertices ``1..k`` each point to the next rim vertex and to the hub ``k+1``."""
    if k < 2:
        raise GraphError("a wheel needs at least two rim vertices (k=1 would need a loop)")
    hub = k + 1
    edges = tuple((i % k + 1, hub) for i in range(1, k + 1)) + ((),)
    return AdmissibleGraph(k + 1, 0, edges)


def is_wheel(g: AdmissibleGraph) -> bool:
    k = g.n - 1
    return g.m == 0 and k >= 2 and g == wheel(k)


def _tstr(t: Target) -> str:
    return t if isinstance(t, str) else str(t)


def encode(g: AdmissibleGraph) -> str:
    if g.m == 0:
        if is_wheel(g):
            return f"W{g.n - 1}"
        prefix = "H"
    else:
        prefix = "K"
    body = ";".join("(" + ",".join(_tstr(t) for t in targets) + ")" for targets in g.out_edges)
    return f"{prefix}{g.n}:{body}"


_HEAD = re.compile(r"^([KH])(\d+):(.*)$")


def parse(s: str) -> AdmissibleGraph:
    s = s.strip()
    m = re.fullmatch(r"W(\d+)", s)
    if m:
        return wheel(int(m.group(1)))
    m = _HEAD.match(s)
    if not m:
        raise GraphError(f"malformed graph encoding {s!r}")
    kind, n, body = m.group(1), int(m.group(2)), m.group(3)
    groups = re.findall(r"\(([^()]*)\)", body) if body else []
    if ";".join(f"({g})" for g in groups) != body:
        raise GraphError(f"malformed edge list in {s!r}")
    if len(groups) != n:
        raise GraphError(f"{s!r}: expected {n} edge lists, found {len(groups)}")
    edges = []
    for grp in groups:
        targets: list[Target] = []
        for tok in (grp.split(",") if grp else []):
            tok = tok.strip()
            if tok in ("L", "R"):
                targets.append(tok)
            elif tok.isdigit():
                targets.append(int(tok))
            else:
                raise GraphError(f"bad target {tok!r} in {s!r}")
        edges.append(tuple(targets))
    return AdmissibleGraph(n, 2 if kind == "K" else 0, tuple(edges))


def relabel(g: AdmissibleGraph, perm: Iterable[int]) -> AdmissibleGraph:
    """Move vertex ``i`` to position ``perm[i-1]`` (1-based images)."""
    perm = list(perm)
    if sorted(perm) != list(range(1, g.n + 1)):
        raise GraphError("not a permutation of the aerial vertices")
    new: list = [None] * g.n
    for i, targets in enumerate(g.out_edges):
        new[perm[i] - 1] = tuple(t if isinstance(t, str) else perm[t - 1] for t in targets)
    return AdmissibleGraph(g.n, g.m, tuple(new))
