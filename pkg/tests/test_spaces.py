import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_int_function
from dyadiclab.geometry import Cube, GridSpec, Rectangle
from dyadiclab.haar import GridFunction, HaarSymbol, Mesh, haar_tensor, mean_layer
from dyadiclab.scalar import EXACT, FLOAT
from dyadiclab.spaces import (ExponentTriple, Weight, ap_characteristic, little_bmo, lp_norm, maximal, product_bmo,
                              random_weight, square_function, square_function_energy_exact, strong_max_nd)

N = 3
MESH = Mesh(1, 1, N, N)
GRID = GridSpec(1, 1, N, N)
UNIT = Rectangle(Cube(1, 0, (0,), GRID), Cube(2, 0, (0,), GRID))


def test_exponent_triple_validation():
    assert ExponentTriple(4, 4, 2).r_dual == 2
    assert ExponentTriple.from_pq(1.5, 1.5).r == pytest.approx(0.75)
    assert not ExponentTriple(1.5, 1.5, 0.75).banach
    with pytest.raises(ValueError):
        ExponentTriple(2, 2, 2)
    with pytest.raises(ValueError):
        ExponentTriple(1, 2, 2 / 3)


def test_lp_norm_examples():
    f = GridFunction(MESH, UNIT.indicator().astype(float))
    assert lp_norm(f, 2) == pytest.approx(1.0)
    h = haar_tensor(MESH, HaarSymbol.cancel(UNIT.first), HaarSymbol.cancel(UNIT.second))
    assert lp_norm(h, 2) == pytest.approx(1.0)


@given(st.floats(-10, 10), st.sampled_from([0.75, 1.0, 1.5, 2.0, 3.0, math.inf]))
def test_lp_homogeneity(c, p):
    f = random_int_function(MESH, np.random.default_rng(0), FLOAT)
    assert lp_norm(f * c, p) == pytest.approx(abs(c) * lp_norm(f, p), rel=1e-12, abs=1e-12)


def test_ap_constant_weights():
    for c in (1.0, 3.5):
        w = GridFunction.constant(MESH, c)
        assert ap_characteristic(w, 2)["rectangular"] == pytest.approx(1.0)


def test_ap_two_cell_weight_by_enumeration():
    mesh = Mesh(1, 1, 1, 1)
    x = np.ones(mesh.shape)
    x[1, :] = 2.0  # values 1 and 2 on the halves of [0,1) in the first variable
    got = ap_characteristic(GridFunction(mesh, x), 2)["rectangular"]
    best = 0.0
    for l1 in range(2):
        for l2 in range(2):
            s1, s2 = 2 >> l1, 2 >> l2
            for a in range(0, 4, s1):
                for b in range(0, 4, s2):
                    blk = x[a:a + s1, b:b + s2]
                    best = max(best, blk.mean() * (1 / blk).mean())
    assert got == pytest.approx(best)
    assert best == pytest.approx(1.5 * 0.75)


def test_bmo_of_constant():
    b = GridFunction.constant(MESH, 2.0)
    assert little_bmo(b) == 0
    assert product_bmo(b) == 0


def test_product_bmo_of_haar_tensor():
    b = haar_tensor(MESH, HaarSymbol.cancel(UNIT.first), HaarSymbol.cancel(UNIT.second))
    assert product_bmo(b) >= 1 - 1e-12


def test_product_bmo_bounded_by_little_bmo():
    # recorded constant: product_bmo <= 2 little_bmo over random symbols
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        b = random_int_function(MESH, rng, FLOAT)
        worst = max(worst, product_bmo(b) / little_bmo(b))
    assert worst <= 2.0


def test_maximal_of_constant_and_trivial_symbol():
    f = GridFunction.constant(MESH, 3.0)
    for kind in ("dyadic_M", "strong_M", "M"):
        assert np.allclose(maximal(f, kind).values, 3.0)
    g = random_int_function(MESH, np.random.default_rng(2), FLOAT)
    assert np.allclose(maximal(g, "M_b", b=f).values, 0.0)


def test_strong_maximal_example():
    x = np.zeros(MESH.shape)
    x[:4, :4] = 1.0  # the square [0,1/2)^2
    m = maximal(GridFunction(MESH, x), "strong_M").values
    assert m[5, 5] == pytest.approx(0.25)


@given(st.integers(0, 2 ** 16))
def test_maximal_dominates(seed):
    f = random_int_function(MESH, np.random.default_rng(seed), FLOAT)
    a = np.abs(f.values)
    assert np.all(maximal(f, "strong_M").values >= a - 1e-12)
    assert np.all(strong_max_nd(a, MESH) >= a - 1e-12)
    # the larger family of windows dominates the dyadic one
    assert np.all(strong_max_nd(a, MESH) >= maximal(f, "strong_M").values - 1e-12)


def test_square_function_parseval_exact():
    rng = np.random.default_rng(3)
    for _ in range(10):
        f = random_int_function(MESH, rng)
        g = f - mean_layer(f)
        assert square_function_energy_exact(f) == g.inner(g)


def test_square_function_of_haar_tensor():
    h = haar_tensor(MESH, HaarSymbol.cancel(UNIT.first), HaarSymbol.cancel(UNIT.second))
    S = square_function(h).values
    assert np.allclose(S, UNIT.indicator() / math.sqrt(float(UNIT.measure)))


def test_square_function_comparability():
    # p = 2 is an identity; other exponents stay within a recorded constant 3
    rng = np.random.default_rng(4)
    for p, C in ((2.0, 1.0 + 1e-12), (1.5, 3.0), (3.0, 3.0)):
        for _ in range(100 if p != 2 else 20):
            f = random_int_function(MESH, rng, FLOAT)
            g = f - mean_layer(f)
            ratio = lp_norm(square_function(f), p) / lp_norm(g, p)
            assert 1 / C <= ratio <= C


def test_random_weight_is_mild():
    rng = np.random.default_rng(5)
    for _ in range(5):
        w = random_weight(MESH, rng)
        assert isinstance(w, Weight)
        assert ap_characteristic(w, 2)["rectangular"] <= 4.0
