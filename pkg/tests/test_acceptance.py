"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line; the lines are repeated in the
terminal summary.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_int_function
from dyadiclab import commutators as cm
from dyadiclab.geometry import GridSpec
from dyadiclab.haar import GridFunction, Mesh, mean_layer
from dyadiclab.normlab import complexity_scan, identity_suite, rwt_suite, stable_within, weighted_suite
from dyadiclab.operators import CLASSES, FULL, PARTIAL, SHIFT, all_patterns, random_admissible_spec
from dyadiclab.randomized import (MONTE_CARLO, GridEnsemble, coarse_random_function, coarse_random_set,
                                  localisation_residual, rwt_experiment)
from dyadiclab.scalar import EXACT, FLOAT, to_float
from dyadiclab.spaces import ExponentTriple, little_bmo, maximal, square_function_energy_exact
from dyadiclab.normlab import unit_bmo_symbol

SCAN_DEPTHS = (4, 5, 6)
SCAN_COMPLEXITIES = [(0, 0, 0), (1, 1, 1), (2, 2, 2)]
SCAN_TRIPLES = [(4, 4, 2), (3, 3, 1.5)]


def record(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_c01_expansion_identities():
    N = 4
    mesh, grid = Mesh(1, 1, N, N), GridSpec(1, 1, N, N)
    rng = np.random.default_rng(101)
    t0 = time.time()
    nonzero = 0
    worst_float = 0.0
    count = {p: 0 for p in cm.PATTERNS2}
    for _ in range(100):
        b, f = random_int_function(mesh, rng), random_int_function(mesh, rng)
        ce = cm.ParaproductCache(b, f, grid)
        bf, ff = b.to_float(), f.to_float()
        cf = cm.ParaproductCache(bf, ff, grid)
        for pat in cm.PATTERNS2:
            for _ in range(2):
                I, J = cm.random_cubes_for(rng, grid, pat)
                res, _ = cm.expansion_residual(b, f, I, J, pat, ce)
                nonzero += bool(res)
                rf, terms = cm.expansion_residual(bf, ff, I, J, pat, cf)
                scale = max([abs(t.value) for t in terms] + [1.0])
                worst_float = max(worst_float, abs(rf) / scale)
                count[pat] += 1
    elapsed = time.time() - t0
    passed = nonzero == 0 and worst_float <= 1e-9 and elapsed < 60 and min(count.values()) >= 200
    record(1, "expansion identities", passed,
           f"{sum(count.values())} instances, exact nonzero={nonzero}, float rel={worst_float:.1e}, {elapsed:.1f}s")
    assert passed


def test_c02_commutator_identities():
    t0 = time.time()
    rep = identity_suite(4, range(100), EXACT)
    elapsed = time.time() - t0
    names = {r.cls for r in rep.rows}
    n_ident = len([n for n in names if not n.startswith("expansion")])
    per = min(sum(1 for r in rep.rows if r.cls == n) for n in names)
    passed = rep.passed and elapsed < 120 and per >= 100 and n_ident == 19
    record(2, "commutator identities", passed,
           f"{n_ident} identities x {per} instances, all exact zero={rep.passed}, {elapsed:.1f}s")
    assert passed


def test_c03_parseval():
    mesh = Mesh(1, 1, 4, 4)
    rng = np.random.default_rng(103)
    bad = 0
    for _ in range(100):
        f = random_int_function(mesh, rng)
        g = f - mean_layer(f)
        bad += square_function_energy_exact(f) != g.inner(g)
    record(3, "square function Parseval", bad == 0, f"100 functions, mismatches={bad}")
    assert bad == 0


def test_c04_maximal_domination():
    N = 3
    mesh, grid = Mesh(1, 1, N, N), GridSpec(1, 1, N, N)
    rng = np.random.default_rng(104)
    Is = grid.all_cubes(1)
    Js = grid.all_cubes(2, N - 1)
    checks = violations = 0
    for _ in range(50):
        b = random_int_function(mesh, rng, FLOAT)
        f = random_int_function(mesh, rng, FLOAT)
        phi = maximal(f, "phi_b_axis2", b=b, grid=grid)
        mb = maximal(f, "M_b", b=b)
        for I in Is:
            for J in Js:
                r = cm.maximal_domination_check(b, f, I, J, phi, mb)
                checks += 1
                violations += (not r.ok) + (r.lhs2 > r.rhs2 + 1e-12 * max(1.0, r.rhs2))
    record(4, "maximal domination", violations == 0,
           f"{checks} (b,f,I,J) checks over {len(Is)}x{len(Js)} cubes, violations={violations}")
    assert violations == 0


def test_c05_bmo_telescoping():
    N = 4
    mesh = Mesh(1, 1, N, N)
    rng = np.random.default_rng(105)
    worst = 0.0
    violations = 0
    for t in range(50):
        if t % 2:
            b = GridFunction(mesh, rng.standard_normal(mesh.shape))
        else:
            b = coarse_random_function(mesh, rng, level=N)
        b = b * (1.0 / little_bmo(b))
        out = cm.telescoping_check(b, N, cm.TELESCOPING_C, bmo=1.0)
        worst = max(worst, out["worst_ratio"])
        violations += out["violations"]
    passed = violations == 0
    record(5, "BMO telescoping", passed,
           f"C={cm.TELESCOPING_C:g}, 50 unit-bmo symbols, exhaustive pairs, worst gap/bound={worst:.3f}")
    assert passed


def _scan_summary(iterated: bool, depths, limit: float, stability: float | None):
    t0 = time.time()
    table = {}
    slopes = {}
    for N in depths:
        rep = complexity_scan(N, SCAN_COMPLEXITIES, SCAN_TRIPLES, trials=500, seed=0, iterated=iterated)
        for row in rep.rows:
            table.setdefault((row.p, row.q, row.r, max(row.k)), []).append(row.value)
        for key, val in rep.aggregates.items():
            if key.startswith("slope") and not key.endswith("superlinear"):
                slopes[(N, key)] = val
    elapsed = time.time() - t0
    slope_ok = all(s <= limit for s in slopes.values())
    stable_ok = True
    spread = 0.0
    if stability is not None:
        for vals in table.values():
            mid = 0.5 * (max(vals) + min(vals))
            spread = max(spread, (max(vals) - mid) / mid if mid > 0 else 0.0)
            stable_ok &= stable_within(vals, stability)
    return slopes, table, elapsed, slope_ok, stable_ok, spread


def test_c06_boundedness_fits():
    slopes, table, elapsed, slope_ok, stable_ok, spread = _scan_summary(False, SCAN_DEPTHS, 1.3, 0.3)
    passed = slope_ok and stable_ok and elapsed < 1800
    record(6, "commutator complexity fits", passed,
           f"max slope={max(slopes.values()):.2f} (limit 1.3), depth spread=+-{100 * spread:.0f}% (limit 30%), "
           f"{elapsed:.0f}s")
    assert passed


def test_c07_iterated_commutators():
    slopes, table, elapsed, slope_ok, _, _ = _scan_summary(True, (4, 5), 2.3, None)
    rng = np.random.default_rng(107)
    mesh = Mesh(1, 1, 4, 4)
    nonzero = 0
    cases = 0
    for kind, k, v in ((SHIFT, (1, 0, 1), (0, 1, 1)), (SHIFT, (0, 0, 0), (0, 0, 0)), (PARTIAL, (1, 0, 0), (0, 0, 0)),
                       (FULL, (0, 0, 0), (0, 0, 0))):
        for pat in all_patterns(kind)[::4]:
            spec = random_admissible_spec(rng, kind, k, v, pat, N1=4, N2=4)
            fs = [coarse_random_function(mesh, rng, level=4, backend=EXACT) for _ in range(5)]
            res = cm.commutator_adjoint_residuals(spec, *fs)
            nonzero += bool(res["single"]) + bool(res["iterated"])
            cases += 1
    passed = slope_ok and nonzero == 0
    record(7, "iterated commutators", passed,
           f"max slope={max(slopes.values()):.2f} (limit 2.3), adjoint identity exact on {cases} specs "
           f"(nonzero={nonzero}), {elapsed:.0f}s")
    assert passed


def test_c08_restricted_weak_type():
    rep = rwt_suite(Ns=(3, 4), seeds=range(3), triples=((3, 3, 1.5), (1.5, 1.5, 0.75)), trials=6,
                    containment_N=3, stability=0.5)
    mesh = Mesh(1, 1, 3, 3)
    grid = GridSpec(1, 1, 3, 3)
    rng = np.random.default_rng(108)
    loc_bad = 0
    for _ in range(100):
        b, f3 = random_int_function(mesh, rng), random_int_function(mesh, rng)
        I3 = cm.random_cube(rng, grid, 1, True)
        J3 = cm.random_cube(rng, grid, 2, False)
        loc_bad += bool(localisation_residual(b, f3, I3, J3))
    agg = rep.aggregates
    passed = rep.passed and loc_bad == 0
    ratios = {k: [round(x, 4) for x in v] for k, v in agg.items() if k.startswith("ratios")}
    record(8, "restricted weak type", passed,
           f"min |E'|/|E|={agg['min_E_prime_fraction']:.3f}, containment violations={agg['containment_violations']}, "
           f"localisation nonzero={loc_bad}, ratios={ratios}")
    assert passed


def test_c09_weighted_ceilings():
    rep = weighted_suite(Ns=(3, 4, 5), trials=200, seed=0, stability=0.3)
    failing = [a["name"] for a in rep.assertions if not a["passed"]]
    worst = max(max(v) for k, v in rep.aggregates.items() if k.startswith("ceiling"))
    record(9, "weighted ceilings", rep.passed,
           f"{len(rep.assertions)} families stable within 30% over N=3..5, largest ceiling={worst:.2f}, "
           f"unstable={failing}")
    assert rep.passed


def test_c10_backend_agreement():
    N = 3
    mesh, grid = Mesh(1, 1, N, N), GridSpec(1, 1, N, N)
    rng = np.random.default_rng(110)
    worst = 0.0
    n = 0

    def compare(exact_val, float_val):
        nonlocal worst, n
        e = np.asarray(to_float(exact_val), dtype=float)
        f = np.asarray(to_float(float_val), dtype=float)
        scale = max(float(np.max(np.abs(e))) if e.size else 0.0, 1.0)
        worst = max(worst, float(np.max(np.abs(e - f))) / scale if e.size else 0.0)
        n += 1

    for kind in CLASSES:
        k, v = {SHIFT: ((1, 0, 1), (0, 1, 0)), PARTIAL: ((1, 0, 0), (0, 0, 0)), FULL: ((0, 0, 0), (0, 0, 0))}[kind]
        for pat in all_patterns(kind):
            spec = random_admissible_spec(rng, kind, k, v, pat, N1=N, N2=N, magnitude="uniform")
            fs = [random_int_function(mesh, rng) for _ in range(3)]
            ff = [f.to_float() for f in fs]
            sf = spec.astype(FLOAT)
            compare(spec.apply(fs[0], fs[1]).values, sf.apply(ff[0], ff[1]).values)
            b = random_int_function(mesh, rng)
            compare(cm.commutator(spec, 1, b).form(*fs), cm.commutator(sf, 1, b.to_float()).form(*ff))
    for i in range(1, 9):
        b, f = random_int_function(mesh, rng), random_int_function(mesh, rng)
        compare(cm.paraproduct_A(i, b, f).values, cm.paraproduct_A(i, b.to_float(), f.to_float()).values)
    ens = GridEnsemble.for_mesh(mesh, MONTE_CARLO, trials=2)
    for seed in range(3):
        r = np.random.default_rng([seed, 10])
        spec = random_admissible_spec(r, SHIFT, (1, 1, 1), (1, 1, 1), "0cc/cc0", N1=N, N2=N, backend=FLOAT)
        b = unit_bmo_symbol(mesh, r)
        f1, f2 = coarse_random_function(mesh, r), coarse_random_function(mesh, r)
        E = coarse_random_set(mesh, r)
        t = ExponentTriple(3, 3, 1.5)
        fl = rwt_experiment(spec, b, t, E, f1, f2, ens, check_containment=False)
        ex = rwt_experiment(spec.astype(EXACT), b.to_exact(), t, E, f1.to_exact(), f2.to_exact(), ens,
                            check_containment=False)
        compare(ex.value, fl.value)
    passed = worst <= 1e-9
    record(10, "backend agreement", passed, f"{n} float/exact comparisons, worst relative gap={worst:.1e}")
    assert passed
