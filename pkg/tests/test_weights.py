from __future__ import annotations

import math
import random
import warnings
from fractions import Fraction

import numpy as np
import pytest

from starlie.graphs import encode, enumerate_graphs, parse, wheel
from starlie.starprod import validate_table
from starlie.weights import (INTEGRATOR_VERSION, ConfigurationPoint, DegenerateConfiguration,
                             DimensionMismatch, ReconstructionError, WeightCache, WeightEstimate,
                             finite_difference_density, hyperbolic_angle, mc_weight, orbit,
                             pullback_density, reconstruct_rational, solve_low_order_table)


def test_angle_examples():
    assert hyperbolic_angle(1j, 2j) == pytest.approx(0.0, abs=1e-15)
    assert hyperbolic_angle(1j, 1) == pytest.approx(math.pi / 2)
    assert hyperbolic_angle(1j, 0) % (2 * math.pi) == pytest.approx(0.0, abs=1e-15)


def test_angle_range_and_errors():
    rng = random.Random(0)
    for _ in range(200):
        z1 = complex(rng.uniform(-3, 3), rng.uniform(0.1, 3))
        z2 = complex(rng.uniform(-3, 3), rng.uniform(0, 3))
        assert 0 <= hyperbolic_angle(z1, z2) < 2 * math.pi
    with pytest.raises(ValueError):
        hyperbolic_angle(1j, 1j)
    with pytest.raises(ValueError):
        hyperbolic_angle(1.0 + 0j, 2j)


def _random_config(rng, k):
    return ConfigurationPoint(tuple(complex(rng.uniform(-2, 2), rng.uniform(0.2, 2.5))
                                    for _ in range(k)))


@pytest.mark.parametrize("enc", ["K1:(L,R)", "K1:(R,L)", "K2:(L,2);(L,R)", "K2:(R,2);(1,L)",
                                 "K2:(L,R);(L,R)", "W2"])
def test_analytic_jacobian_matches_finite_differences(enc):
    g = parse(enc)
    rng = random.Random(enc)
    free = g.n if g.m == 2 else g.n - 1
    checked = 0
    while checked < 100:
        c = _random_config(rng, free)
        pts = list(c.points) + ([0, 1] if g.m == 2 else [1j])
        if min(abs(a - b) for i, a in enumerate(pts) for b in pts[i + 1:]) < 0.1:
            continue
        a = pullback_density(g, c)
        f = finite_difference_density(g, c)
        assert abs(a - f) <= 1e-6 * max(abs(a), 1e-3)
        checked += 1


def test_wedge_density_at_i():
    g = parse("K1:(L,R)")
    a = pullback_density(g, (1j,))
    assert a == pytest.approx(finite_difference_density(g, (1j,)), rel=1e-6)


def test_dimension_mismatch_and_degenerate():
    with pytest.raises(DimensionMismatch):
        pullback_density(parse("K1:(L)"), (1j,))
    with pytest.raises(DegenerateConfiguration):
        pullback_density(parse("K2:(L,2);(L,R)"), (1j, 1j + 1e-13))
    with pytest.raises(DegenerateConfiguration):
        ConfigurationPoint((1.0 + 0j,))


def test_mismatch_graph_weight_is_exactly_zero():
    est = mc_weight(parse("K2:(L);(L,R)"), 10_000, 1)
    assert est.mean == 0.0 and est.stderr == 0.0


def test_sample_floor():
    with pytest.raises(ValueError, match="10\\^4"):
        mc_weight(parse("K1:(L,R)"), 1000, 1)


def test_determinism_and_worker_independence():
    g = parse("K2:(L,2);(1,R)")
    a = mc_weight(g, 50_000, 5)
    b = mc_weight(g, 50_000, 5)
    c = mc_weight(g, 50_000, 5, workers=3)
    assert (a.mean, a.stderr) == (b.mean, b.stderr) == (c.mean, c.stderr)
    assert mc_weight(g, 50_000, 6).mean != a.mean


def test_stderr_scaling():
    g = parse("K1:(L,R)")
    ratios = []
    for seed in range(5):
        small = mc_weight(g, 40_000, seed)
        big = mc_weight(g, 80_000, seed + 100)
        ratios.append(big.stderr / small.stderr)
    assert abs(float(np.mean(ratios)) - 1 / math.sqrt(2)) <= 0.15


def test_wedge_estimates():
    lr = mc_weight(parse("K1:(L,R)"), 200_000, 1)
    rl = mc_weight(parse("K1:(R,L)"), 200_000, 2)
    assert lr.within(0.5) and rl.within(-0.5)
    assert str(lr).endswith("(200000 samples, seed 1)")


def test_wheel_estimate_respects_bound():
    est = mc_weight(wheel(2), 200_000, 3)
    c = est.mean / 4
    assert math.isfinite(c)
    assert abs(c) <= 4 + 3 * est.stderr / 4


def test_orbits():
    o = orbit(parse("K2:(L,2);(L,R)"))
    assert len(o) == 8 and o["K2:(L,2);(L,R)"] == 1
    assert o["K2:(2,L);(L,R)"] == -1
    assert sum(len(orbit(g)) for g in {encode(g): g for g in enumerate_graphs(1)}.values()) == 4


def test_reconstruct_rational():
    assert reconstruct_rational(0.0418, 0.001) == Fraction(1, 24)
    assert reconstruct_rational(-0.5002, 0.0007) == Fraction(-1, 2)
    with pytest.raises(ReconstructionError, match="budget"):
        reconstruct_rational(0.04, 0.01)
    with pytest.raises(ReconstructionError, match="no rational"):
        reconstruct_rational(0.015, 0.0001)


def test_bundled_table(table):
    assert table.max_n == 2
    assert table.weight("K0:") == 1
    assert table.weight("K1:(L,R)") - table.weight("K1:(R,L)") == 1
    for n in (1, 2):
        for g in enumerate_graphs(n):
            assert abs(table.weight(g)) <= 4**n
    assert table.weight("K2:(L,2);(L,R)") == Fraction(1, 12)
    assert table.weight("K2:(R,2);(L,R)") == Fraction(-1, 12)
    assert table.weight("K2:(L,2);(1,R)") == Fraction(1, 24)
    assert table.weight("K2:(L,R);(L,R)") == Fraction(1, 4)
    assert validate_table(table) == []


def _with_orbit(table, rep, value):
    from starlie.weights import WeightTable

    bad = WeightTable(dict(table.weights), 2)
    for enc, sign in orbit(parse(rep)).items():
        bad.weights[enc] = sign * value
    return bad


def test_validation_catches_bad_tables(table):
    from starlie.weights import WeightTable

    bad = WeightTable(dict(table.weights), 2)
    bad.weights["K2:(L,2);(1,R)"] = Fraction(1, 23)
    assert any(p.startswith("symmetry") for p in validate_table(bad))
    bad = WeightTable(dict(table.weights), 2)
    bad.weights["K0:"] = Fraction(2)
    assert any("empty graph" in p for p in validate_table(bad))
    bad = WeightTable(dict(table.weights), 2)
    bad.weights["K1:(R,L)"] = Fraction(1, 2)
    assert validate_table(bad)
    assert any("associativity" in p for p in validate_table(_with_orbit(table, "K2:(L,2);(L,R)", 0)))
    assert any("associativity" in p for p in validate_table(_with_orbit(table, "K2:(L,R);(L,R)", 0)))


def test_chain_orbit_is_pinned_only_through_the_wheel_coefficient(table, sl2):
    from starlie.duflo import solve_wheel_coeffs
    from starlie.starprod import StarContext

    bad = _with_orbit(table, "K2:(L,2);(1,R)", Fraction(1, 23))
    assert validate_table(bad) == []
    good = solve_wheel_coeffs(sl2, StarContext(sl2, table, 2), 1)[1]
    shifted = solve_wheel_coeffs(sl2, StarContext(sl2, bad, 2), 1)[1]
    assert good == 0 and shifted != 0


@pytest.mark.slow
def test_solve_reproduces_bundled_table(table):
    solved = solve_low_order_table(samples=1_000_000, seed=20240)
    assert solved.weights == table.weights
    for rep, est in solved.estimates.items():
        assert abs(Fraction(est.mean) - solved.weights[rep]) <= 3 * Fraction(est.stderr)


def test_cache_round_trip(tmp_path, table):
    cache = WeightCache(tmp_path / "w.cache")
    assert cache.load("K1:(L,R)") is None
    est = WeightEstimate(0.4998, 0.0007, 1_000_000, 9, "W2")
    cache.store(est)
    assert cache.load("W2") == est
    assert cache.load("W2", samples=10) is None
    cache.store(table)
    assert cache.load("K2:(L,2);(L,R)") == Fraction(1, 12)
    cache.store(table)
    assert len(cache.entries()) == len(table.weights) + 1


def test_cache_prefers_exact(tmp_path, table):
    cache = WeightCache(tmp_path / "w.cache")
    cache.store(WeightEstimate(0.49, 0.01, 10_000, 1, "K1:(L,R)"))
    cache.store(table)
    assert cache.load("K1:(L,R)") == Fraction(1, 2)


def test_cache_stale_version_warns(tmp_path):
    path = tmp_path / "w.cache"
    path.write_text("W2 mc 0.1 0.01 10000 1 some-old-integrator\n")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert WeightCache(path).load("W2") is None
    assert any("integrator version" in str(w.message) for w in caught)
    assert INTEGRATOR_VERSION != "some-old-integrator"
