import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_int_function
from dyadiclab.commutators import (PATTERNS2, SYMMETRY_CASES, TELESCOPING_C, ParaproductCache,
                                   bmo_telescoping_gap, commutator, commutator_adjoint_residuals,
                                   expand_product, expansion_residual,
                                   iterated_commutator, lemma_identity, maximal_domination_check,
                                   paraproduct_A, paraproduct_a, pointwise_product, protocol_identity,
                                   random_cubes_for, telescoping_check, zero_operator)
from dyadiclab.geometry import Cube, GridSpec, Rectangle
from dyadiclab.haar import GridFunction, HaarSymbol, Mesh, haar_tensor
from dyadiclab.operators import SHIFT, random_admissible_spec
from dyadiclab.scalar import EXACT, FLOAT, to_float
from dyadiclab.spaces import little_bmo, maximal

N = 4
MESH = Mesh(1, 1, N, N)
GRID = GridSpec(1, 1, N, N)


def rf(rng, backend=EXACT, mesh=MESH):
    return random_int_function(mesh, rng, backend)


def test_paraproducts_vanish_for_constant_symbol():
    rng = np.random.default_rng(0)
    b = GridFunction.constant(MESH, 3, EXACT)
    f = rf(rng)
    for i in range(1, 9):
        assert paraproduct_A(i, b, f).is_zero()
    for axis in (1, 2):
        for i in (1, 2):
            assert paraproduct_a(axis, i, b, f).is_zero()


def test_A1_of_haar_tensor():
    I, J = Cube(1, 1, (1,), GRID), Cube(2, 0, (0,), GRID)
    h = haar_tensor(MESH, HaarSymbol.cancel(I), HaarSymbol.cancel(J), EXACT)
    got = paraproduct_A(1, h, h)
    R = Rectangle(I, J)
    want = GridFunction(MESH, R.indicator().astype(float) / float(R.measure)).to_exact()
    assert (got - want).is_zero()


def test_a2_with_constant_function():
    rng = np.random.default_rng(1)
    b = rf(rng)
    f = GridFunction.constant(MESH, 2, EXACT)
    out = paraproduct_a(1, 2, b, f)
    from dyadiclab.haar import level_ops
    L1, _ = level_ops(GRID, MESH)
    want = (b.values - L1.E(b.values, 0)) * 2
    assert (out - GridFunction(MESH, want)).is_zero()


@pytest.mark.parametrize("pattern", PATTERNS2)
def test_expansion_exact(pattern):
    rng = np.random.default_rng(2)
    for _ in range(5):
        b, f = rf(rng), rf(rng)
        cache = ParaproductCache(b, f, GRID)
        I, J = random_cubes_for(rng, GRID, pattern)
        res, terms = expansion_residual(b, f, I, J, pattern, cache)
        assert not res
    assert len(expand_product(b, f, I, J, "00")) == 2


def test_expansion_constant_symbol_keeps_free_term_only():
    rng = np.random.default_rng(3)
    b = GridFunction.constant(MESH, 5, EXACT)
    f = rf(rng)
    I, J = random_cubes_for(rng, GRID, "cc")
    for t in expand_product(b, f, I, J, "cc"):
        if t.tag != "free":
            assert not t.value


@pytest.mark.parametrize("case", [1, 2, 3])
def test_lemma_identities_exact(case):
    rng = np.random.default_rng(10 + case)
    pf, pg = {1: ("cc", "cc"), 2: ("0c", "cc"), 3: ("0c", "c0")}[case]
    for _ in range(3):
        b, f, g = rf(rng), rf(rng), rf(rng)
        I, J = random_cubes_for(rng, GRID, pf)
        Q, R = random_cubes_for(rng, GRID, pg)
        assert lemma_identity(case, b, f, g, I, J, Q, R).exact_zero


def test_lemma_identity_disjoint_supports():
    rng = np.random.default_rng(4)
    b = rf(rng)
    f = GridFunction(MESH, rf(rng, FLOAT).values * Rectangle(Cube(1, 1, (0,), GRID), Cube(2, 1, (0,), GRID)).indicator()).to_exact()
    g = GridFunction(MESH, rf(rng, FLOAT).values * Rectangle(Cube(1, 1, (1,), GRID), Cube(2, 1, (1,), GRID)).indicator()).to_exact()
    I, J = Cube(1, 1, (0,), GRID), Cube(2, 1, (0,), GRID)
    Q, R = Cube(1, 1, (1,), GRID), Cube(2, 2, (2,), GRID)
    assert lemma_identity(3, b, f, g, I, J, Q, R).exact_zero


def test_identities_with_constant_symbol_are_trivial():
    rng = np.random.default_rng(5)
    b = GridFunction.constant(MESH, 7, EXACT)
    f, g = rf(rng), rf(rng)
    I, J = random_cubes_for(rng, GRID, "cc")
    res = lemma_identity(1, b, f, g, I, J, I, J)
    assert not res.lhs and res.exact_zero


def test_protocol_identities_all_cases():
    rng = np.random.default_rng(6)
    b, f, g = rf(rng), rf(rng), rf(rng)
    cf, cg = ParaproductCache(b, f, GRID), ParaproductCache(b, g, GRID)
    pairs = [p for v in SYMMETRY_CASES.values() for p in v]
    assert len(pairs) == 16 and len(SYMMETRY_CASES) == 7
    for pf, pg in pairs:
        I, J = random_cubes_for(rng, GRID, pf)
        Q, R = random_cubes_for(rng, GRID, pg)
        assert protocol_identity(b, f, g, I, J, Q, R, pf, pg, cf, cg).exact_zero


def test_float_identity_residual_small():
    rng = np.random.default_rng(7)
    b, f, g = rf(rng, FLOAT), rf(rng, FLOAT), rf(rng, FLOAT)
    I, J = random_cubes_for(rng, GRID, "cc")
    Q, R = random_cubes_for(rng, GRID, "0c")
    res = protocol_identity(b, f, g, I, J, Q, R, "cc", "0c")
    assert abs(res.residual) <= 1e-9 * max(res.magnitude(), 1.0)


def test_commutator_trivial_cases():
    rng = np.random.default_rng(8)
    mesh = Mesh(1, 1, 3, 3)
    spec = random_admissible_spec(rng, SHIFT, (1, 0, 0), (0, 1, 0), N1=3, N2=3)
    c = GridFunction.constant(mesh, 3, EXACT)
    f1, f2 = rf(rng, mesh=mesh), rf(rng, mesh=mesh)
    assert commutator(spec, 1, c)(f1, f2).is_zero()
    assert commutator(zero_operator(), 1, rf(rng, mesh=mesh))(f1, f2).is_zero()
    assert iterated_commutator(spec, rf(rng, mesh=mesh), c)(f1, f2).is_zero()
    assert iterated_commutator(spec, c, c)(f1, f2).is_zero()
    # pointwise product commutes with multiplication
    assert commutator(pointwise_product(), 1, rf(rng, mesh=mesh))(f1, f2).is_zero()


@settings(max_examples=6)
@given(st.integers(0, 10 ** 6))
def test_commutator_adjoint_identities(seed):
    rng = np.random.default_rng(seed)
    mesh = Mesh(1, 1, 3, 3)
    spec = random_admissible_spec(rng, SHIFT, (1, 0, 1), (0, 1, 1), N1=3, N2=3)
    fs = [rf(rng, mesh=mesh) for _ in range(5)]
    res = commutator_adjoint_residuals(spec, *fs)
    assert not res["single"] and not res["iterated"]


def test_domination_trivial():
    mesh = Mesh(1, 1, 3, 3)
    grid = GridSpec(1, 1, 3, 3)
    rng = np.random.default_rng(9)
    I, J = Cube(1, 1, (0,), grid), Cube(2, 0, (0,), grid)
    r = maximal_domination_check(GridFunction.constant(mesh, 2.0), rf(rng, FLOAT, mesh), I, J)
    assert r.lhs == 0 and r.ok
    r = maximal_domination_check(rf(rng, FLOAT, mesh), GridFunction.zeros(mesh), I, J)
    assert r.lhs == 0 and r.ok


def test_domination_exhaustive_small():
    mesh = Mesh(1, 1, 3, 3)
    grid = GridSpec(1, 1, 3, 3)
    rng = np.random.default_rng(10)
    for _ in range(3):
        b, f = rf(rng, FLOAT, mesh), rf(rng, FLOAT, mesh)
        phi = maximal(f, "phi_b_axis2", b=b, grid=grid)
        mb = maximal(f, "M_b", b=b)
        for I in grid.all_cubes(1):
            for J in grid.all_cubes(2, 2):
                r = maximal_domination_check(b, f, I, J, phi, mb)
                assert r.ok
                assert r.lhs2 <= r.rhs2 + 1e-12


def test_telescoping_trivial():
    rng = np.random.default_rng(11)
    b = rf(rng, FLOAT)
    I, J = Cube(1, 2, (1,), GRID), Cube(2, 3, (5,), GRID)
    assert bmo_telescoping_gap(b, I, J, I, J)[0] == 0
    c = GridFunction.constant(MESH, 1.0)
    Q, R = Cube(1, 1, (0,), GRID), Cube(2, 1, (1,), GRID)
    assert bmo_telescoping_gap(c, I, J, Q, R)[0] == 0
    with pytest.raises(ValueError):
        bmo_telescoping_gap(b, I, J, Cube(1, 0, (1,), GRID), R)


def test_telescoping_vectorized_matches_pairwise():
    mesh = Mesh(1, 1, 2, 2)
    grid = GridSpec(1, 1, 2, 2)
    rng = np.random.default_rng(12)
    b = rf(rng, FLOAT, mesh)
    fast = telescoping_check(b, 2)
    worst = 0.0
    cubes1 = grid.all_cubes(1, unit_only=True)
    cubes2 = grid.all_cubes(2, unit_only=True)
    for I in cubes1:
        for J in cubes2:
            for Q in cubes1:
                for R in cubes2:
                    gap, bound, ratio = bmo_telescoping_gap(b, I, J, Q, R, bmo=fast["bmo"])
                    if bound > 0:
                        worst = max(worst, ratio)
    assert fast["worst_ratio"] == pytest.approx(worst)
    assert fast["violations"] == 0


def test_frozen_telescoping_constant():
    # the constant is the brute-force maximum at depth 3, rounded up
    assert TELESCOPING_C == 4.0

