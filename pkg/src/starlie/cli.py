"""Command-line interface.

Exit status: 0 on success, 1 when an asserted identity fails, 2 on usage
errors (bad flags, malformed input, requests beyond the resource ceiling or
the weight table's coverage).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from pathlib import Path

from . import __version__
from .graphs import DEFAULT_CEILING, GraphError, encode, enumerate_graphs, parse
from .lie import (AlgebraError, LieAlgebra, find_invariants, is_invariant,
                  load_algebra, normalize_constants, resolve_algebra)
from .poly import Polynomial, PolyParseError, apply_right_operator, monomials, parse_poly_expr
from .starprod import (CoverageError, StarContext, coefficient_bound_report,
                       extract_right_operator, star_graded, validate_table)
from .weights import (INTEGRATOR_VERSION, ReconstructionError, WeightCache, WeightTable,
                      default_workers, load_default_table, mc_weight, solve_low_order_table,
                      table_from_lines)

log = logging.getLogger("starlie")

DEFAULT_CACHE = "starlie-weights.cache"


class UsageError(Exception):
    pass


class Report:
    """Collects ``(key, value)`` rows and prints them as text or ``KEY\\tVALUE``."""

    def __init__(self, fmt: str, out=None):
        self.fmt = fmt
        self.rows: list[tuple[str, str]] = []
        self.out = out or sys.stdout

    def add(self, key: str, value) -> None:
        self.rows.append((key, str(value)))

    def emit(self) -> None:
        if self.fmt == "machine":
            for k, v in self.rows:
                print(f"{k}\t{v}", file=self.out)
            return
        width = max((len(k) for k, _ in self.rows), default=0)
        for k, v in self.rows:
            print(f"{k.replace('_', ' '):<{width}}  {v}", file=self.out)


# -- shared helpers -----------------------------------------------------------

def _algebra(args) -> LieAlgebra:
    L = resolve_algebra(args.algebra)
    log.info("algebra %s (dim %d)", L.name, L.dim)
    return L


def _poly(expr: str, L: LieAlgebra, flag: str) -> Polynomial:
    try:
        return parse_poly_expr(expr, L.basis)
    except PolyParseError as exc:
        raise UsageError(f"{flag}: {exc}; grammar: expr := term (('+'|'-') term)*, "
                         "term := rat ('*' var)* | var ('*' var)*, var := name ('^' posint)?") from None


def _cache(args) -> WeightCache | None:
    if getattr(args, "no_cache", False):
        return None
    return WeightCache(args.cache)


def _table(args) -> WeightTable:
    cache = _cache(args)
    if cache is not None:
        lines = cache.entries()
        if lines:
            table = table_from_lines(lines)
            if table.max_n >= 2 and not validate_table(table):
                log.info("weight table from cache %s: %s", cache.path, table.summary())
                return table
    table = load_default_table()
    log.info("weight table bundled: %s", table.summary())
    return table


def _context(args, L: LieAlgebra) -> StarContext:
    n = getattr(args, "n", None)
    if n is not None and n > DEFAULT_CEILING:
        raise UsageError(f"--n {n}: exceeds the resource ceiling {DEFAULT_CEILING}")
    table = _table(args)
    if L.max_abs_constant() > 2:
        L2, scale = normalize_constants(L)
        log.info("normalized %s with scale %s; polynomials are read in the rescaled basis",
                 L.name, scale)
    else:
        L2, scale = L, 1
        log.info("normalization scale 1 (constants already within bound)")
    ctx = StarContext(L2, table, table.max_n if n is None else min(n, table.max_n), scale)
    if n is not None and n > table.max_n:
        log.warning("--n %d exceeds table coverage n<=%d; results are truncated", n, table.max_n)
    return ctx


# -- subcommands ---------------------------------------------------------------

def cmd_algebra(args, rep: Report) -> int:
    if args.action == "check":
        path = Path(args.algebra)
        try:
            if path.exists():
                L = load_algebra(path.read_text("utf-8"))
            else:
                L = resolve_algebra(args.algebra)
        except AlgebraError as exc:
            rep.add("valid", "no")
            rep.add("error", exc)
            return 1
        rep.add("algebra", L.name)
        rep.add("dim", L.dim)
        rep.add("valid", "yes")
        rep.add("abelian", "yes" if L.is_abelian() else "no")
        rep.add("max_abs_constant", L.max_abs_constant())
        return 0
    L = _algebra(args)
    N, scale = normalize_constants(L)
    log.info("normalization scale %s", scale)
    rep.add("algebra", L.name)
    rep.add("scale", scale)
    rep.add("max_abs_constant", N.max_abs_constant())
    if args.format == "machine":
        for line in N.to_text().splitlines():
            rep.add("line", line)
    else:
        rep.add("normalized", "\n" + N.to_text().rstrip())
    return 0


def cmd_invariants(args, rep: Report) -> int:
    L = _algebra(args)
    basis = find_invariants(L, args.degree)
    rep.add("algebra", L.name)
    rep.add("degree", args.degree)
    rep.add("count", len(basis))
    for p in basis:
        rep.add("invariant", p)
    return 0 if all(is_invariant(L, p) for p in basis) else 1


def cmd_graphs(args, rep: Report) -> int:
    if args.n > args.ceiling:
        raise UsageError(f"--n {args.n}: exceeds the enumeration ceiling {args.ceiling}")
    graphs = enumerate_graphs(args.n, args.cls, ceiling=args.ceiling, workers=args.workers)
    if args.action == "count":
        if args.format == "machine":
            rep.add("count", len(graphs))
        else:
            print(len(graphs))
        return 0
    for g in graphs:
        rep.add("graph", encode(g))
    return 0


def cmd_weights(args, rep: Report) -> int:
    cache = _cache(args)
    if args.action == "mc":
        if not args.graph:
            raise UsageError("weights mc needs --graph")
        g = parse(args.graph)
        enc = encode(g)
        log.info("mc %s samples=%d seed=%d workers=%d", enc, args.samples, args.seed, args.workers)
        est = cache.load(enc, args.samples, args.seed) if cache else None
        if est is not None and not hasattr(est, "mean"):
            est = None  # an exact entry; MC was requested explicitly
        if est is None:
            est = mc_weight(g, args.samples, args.seed, args.workers)
            if cache:
                cache.store(est)
        else:
            log.info("mc estimate for %s loaded from cache %s", enc, cache.path)
        rep.add("graph", enc)
        rep.add("estimate", est)
        rep.add("mean", repr(est.mean))
        rep.add("stderr", repr(est.stderr))
        rep.add("samples", est.samples)
        rep.add("seed", est.seed)
        rep.add("integrator", INTEGRATOR_VERSION)
        return 0
    if args.action == "table":
        if args.solve:
            log.info("solving table: samples=%d per graph seed=%d tolerance=%s",
                     args.samples, args.seed, args.tolerance)
            try:
                table = solve_low_order_table(args.samples, args.seed, args.tolerance, args.workers)
            except ReconstructionError as exc:
                rep.add("status", "failed")
                rep.add("error", exc)
                return 1
            if cache:
                cache.store(table)
            for rep_enc, est in table.estimates.items():
                rep.add("orbit", f"{rep_enc}  {est}  -> {table.weights[rep_enc]}")
        else:
            table = _table(args)
        problems = validate_table(table)
        rep.add("table", table.summary())
        for line in table.to_lines()[1:]:
            rep.add("entry", line)
        rep.add("validation", "passed" if not problems else "; ".join(problems))
        return 1 if problems else 0
    # cache listing
    if cache is None:
        raise UsageError("weights cache needs a cache file (drop --no-cache)")
    rep.add("cache", cache.path)
    entries = cache.entries()
    rep.add("entries", len(entries))
    for line in entries:
        rep.add("entry", line)
    return 0


def cmd_star(args, rep: Report) -> int:
    L = _algebra(args)
    ctx = _context(args, L)
    L = ctx.algebra
    p = _poly(args.p, L, "--p")
    rep.add("algebra", L.name)
    rep.add("max_n", ctx.max_n)
    if args.action == "mul":
        q = _poly(args.q, L, "--q")
        r = star_graded(p, q, ctx)
        if not r.complete and not args.truncate:
            raise CoverageError(r.missing_order, ctx.max_n, "star product")
        rep.add("product", r.poly)
        rep.add("terms", r.poly.term_list())
        rep.add("exact_degrees", ",".join(map(str, sorted(r.exact_degrees))))
        return 0
    if args.action == "op":
        D = extract_right_operator(p, ctx, args.cap, strict=not args.truncate)
        l = max(p.degree(), 0)
        rep.add("operator", D)
        rep.add("order", D.order())
        rep.add("order_bound", l)
        ok = D.order() <= l
        # defining identity r * p = r . D on monomials r of degree <= cap; both
        # sides are built from the same orders n <= max_n, so they agree exactly
        for d in range(0, args.cap + 1):
            for e in monomials(L.dim, d):
                r = Polynomial.monomial(L.basis, e)
                if star_graded(r, p, ctx).poly != apply_right_operator(r, D):
                    ok = False
        rep.add("identity_and_order", "ok" if ok else "FAILED")
        return 0 if ok else 1
    # bound
    status = 0
    for mono, c in p.terms.items():
        m = Polynomial.monomial(L.basis, mono)
        report = coefficient_bound_report(m, ctx, args.orders, args.workers)
        for k, v in report.lines():
            rep.add(k, v)
        if not report.ok:
            status = 1
    return status


def cmd_duflo(args, rep: Report) -> int:
    from .duflo import duflo_residual, eta, q_jet, solve_wheel_coeffs, tau_jet

    L = _algebra(args)
    rep.add("algebra", L.name)
    if args.action == "qjet":
        rep.add("q", q_jet(L, args.order))
        return 0
    if args.action == "taujet":
        ctx = _context(args, L)
        wc = solve_wheel_coeffs(ctx.algebra, ctx, max(1, args.order // 2))
        rep.add("tau", tau_jet(ctx.algebra, args.order, wc))
        return 0
    p = _poly(args.p, L, "--p")
    if args.action == "eta":
        rep.add("eta", eta(p, L))
        return 0
    q = _poly(args.q, L, "--q")
    invariant = is_invariant(L, p) and is_invariant(L, q)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = duflo_residual(p, q, L)
    for w in caught:
        log.warning("%s", w.message)
    rep.add("residual", res)
    rep.add("inputs_invariant", "yes" if invariant else "no")
    if invariant:
        rep.add("identity", "holds" if res.is_zero() else "FAILS")
        return 0 if res.is_zero() else 1
    rep.add("identity", "not asserted (non-invariant input)")
    return 0


def cmd_kv(args, rep: Report) -> int:
    from .duflo import NoConstraintError, WheelCoefficients, kv_graded_residual, solve_wheel_coeffs

    L = _algebra(args)
    ctx = _context(args, L)
    L = ctx.algebra
    r = _poly(args.p, L, "--p")
    p = _poly(args.q, L, "--q")
    try:
        wc = solve_wheel_coeffs(L, ctx, max(1, args.depth // 2))
    except NoConstraintError:
        # every trace power vanishes, so tau = 1 whatever the coefficients are
        wc = WheelCoefficients({k: 0 for k in range(1, args.depth // 2 + 1)})
        log.info("wheel coefficients unconstrained on %s; tau = 1", L.name)
    comps = kv_graded_residual(r, p, ctx, args.depth, wc)
    rep.add("algebra", L.name)
    rep.add("depth", args.depth)
    for deg, comp in sorted(comps.items(), reverse=True):
        rep.add(f"component_{deg}", comp)
    zero = all(not c for c in comps.values())
    invariant = is_invariant(L, r) and is_invariant(L, p)
    rep.add("inputs_invariant", "yes" if invariant else "no")
    if invariant:
        rep.add("identity", "holds" if zero else "FAILS")
        return 0 if zero else 1
    rep.add("identity", "not asserted (non-invariant input)")
    return 0


def cmd_wheels(args, rep: Report) -> int:
    from .duflo import solve_wheel_coeffs

    L = _algebra(args)
    ctx = _context(args, L)
    if args.samples:
        log.info("wheel MC cross-check samples=%d seed=%d", args.samples, args.seed)
    wc = solve_wheel_coeffs(ctx.algebra, ctx, args.kmax, args.samples or None,
                            args.seed, args.workers)
    status = 0
    for k, v in sorted(wc.values.items()):
        rep.add(f"c_{2 * k}", v)
        rep.add(f"c_{2 * k}_test_element", wc.test_elements[k])
        within = abs(v) <= 2 ** (2 * k)
        rep.add(f"c_{2 * k}_within_bound", "yes" if within else "no")
        if not within:
            status = 1
        if k in wc.estimates:
            mean, err = wc.mc_value(k)
            rep.add(f"c_{2 * k}_mc", f"{mean:.6g} ± {err:.3g} ({wc.estimates[k].samples} samples, "
                                     f"seed {wc.estimates[k].seed})")
            agree = wc.agrees(k)
            rep.add(f"c_{2 * k}_agreement", "yes" if agree else "no")
            if not agree:
                status = 1
    rep.add("note", "membership in the adjoint right ideal is only probed via annihilation "
                    "of invariants; germ-level membership is not checked")
    return status


# -- parser --------------------------------------------------------------------

def _workers(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("text", "machine"), default="text")
    common.add_argument("--cache", default=os.environ.get("STARLIE_CACHE", DEFAULT_CACHE),
                        help="weight cache file")
    common.add_argument("--no-cache", action="store_true", help="ignore and do not write the cache")
    common.add_argument("--workers", type=_workers, default=default_workers(),
                        help="worker processes (default from STARLIE_WORKERS)")
    common.add_argument("--seed", type=int, default=20240)
    common.add_argument("--quiet", action="store_true", help="log warnings only")

    alg = argparse.ArgumentParser(add_help=False)
    alg.add_argument("--algebra", default="sl2", help="bundled name or algebra file path")

    parser = argparse.ArgumentParser(prog="starlie", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("algebra", parents=[common, alg], help="validate or normalize an algebra")
    p.add_argument("action", choices=("check", "normalize"))
    p.set_defaults(func=cmd_algebra)

    p = sub.add_parser("invariants", parents=[common, alg], help="invariant polynomials")
    p.add_argument("--degree", type=int, required=True)
    p.set_defaults(func=cmd_invariants)

    p = sub.add_parser("graphs", parents=[common], help="enumerate admissible graphs")
    p.add_argument("action", choices=("count", "list"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--class", dest="cls", choices=("A", "G"), default="A")
    p.add_argument("--ceiling", type=int, default=DEFAULT_CEILING)
    p.set_defaults(func=cmd_graphs)

    p = sub.add_parser("weights", parents=[common], help="graph weights and the cache")
    p.add_argument("action", choices=("mc", "table", "cache"))
    p.add_argument("--graph", help="canonical encoding, e.g. 'K1:(L,R)' or 'W2'")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--tolerance", type=float, default=3.0)
    p.add_argument("--solve", action="store_true", help="re-derive the table from MC")
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("star", parents=[common, alg], help="star product and right operators")
    p.add_argument("action", choices=("mul", "op", "bound"))
    p.add_argument("--p", required=True)
    p.add_argument("--q", default="1")
    p.add_argument("--n", type=int, help="graph-order ceiling (at most 5)")
    p.add_argument("--cap", type=int, default=3, help="coefficient degree cap for 'op'")
    p.add_argument("--orders", type=int, default=3, help="orders covered by 'bound'")
    p.add_argument("--truncate", action="store_true",
                   help="accept graded truncation instead of a coverage error")
    p.set_defaults(func=cmd_star)

    p = sub.add_parser("duflo", parents=[common, alg], help="q, tau, eta and the Duflo identity")
    p.add_argument("action", choices=("qjet", "taujet", "eta", "verify"))
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--p", default="1")
    p.add_argument("--q", default="1")
    p.set_defaults(func=cmd_duflo)

    p = sub.add_parser("kv", parents=[common, alg], help="graded Kashiwara-Vergne residual")
    p.add_argument("action", choices=("residual",))
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--depth", type=int, default=2)
    p.set_defaults(func=cmd_kv)

    p = sub.add_parser("wheels", parents=[common, alg], help="solve wheel coefficients")
    p.add_argument("action", choices=("solve",))
    p.add_argument("--kmax", type=int, default=1)
    p.add_argument("--samples", type=int, default=0, help="MC cross-check budget (0 = off)")
    p.set_defaults(func=cmd_wheels)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    log.info("starlie %s: %s seed=%d workers=%d", __version__, args.command, args.seed, args.workers)
    rep = Report(args.format)
    try:
        status = args.func(args, rep)
    except (UsageError, CoverageError, GraphError, AlgebraError, PolyParseError) as exc:
        parser.exit(2, f"starlie: error: {exc}\n")
    except ValueError as exc:
        # domain errors from the solvers (e.g. an algebra with no constraint)
        parser.exit(2, f"starlie: error: {exc}\n")
    rep.emit()
    return status


if __name__ == "__main__":
    sys.exit(main())
