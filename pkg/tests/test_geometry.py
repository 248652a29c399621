from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dyadiclab.geometry import (Cube, GridSpec, Rectangle, all_omegas, ancestor, sample_omega, shifted_grid,
                                standard_grid)


def test_standard_level_one_cubes():
    g = standard_grid(1, 1, 3, 3)
    got = [(Q.corner()[0], Q.corner()[0] + Q.side) for Q in g.cubes(1, 1)]
    half = Fraction(1, 2)
    assert got == [(0, half), (half, 1), (1, 3 * half), (3 * half, 2)]


def test_shifted_with_zero_digits_is_standard():
    assert shifted_grid(1, 1, 3, 3, ((0,),) * 3, ((0,),) * 3) == standard_grid(1, 1, 3, 3)


@pytest.mark.parametrize("j", range(4))
def test_cube_count_per_level(j):
    g = standard_grid(1, 1, 3, 3)
    assert len(list(g.cubes(1, j))) == 2 ** (j + 1)


def test_zero_digits_leave_cubes_fixed():
    g = GridSpec(2, 1, 3, 2)
    for j in range(4):
        assert g.shift_cells(1, j) == (0, 0)


def test_nesting_under_every_shift():
    # children of a shifted cube are shifted cubes of the next level, for all 2^3 digit choices
    for om in all_omegas(1, 3):
        g = shifted_grid(1, 1, 3, 3, om, ((0,),) * 3)
        for j in range(3):
            for Q in g.cubes(1, j):
                lo, hi = Q.cell_range()[0]
                kids = sorted(c.cell_range()[0] for c in Q.children())
                assert kids[0][0] == lo and kids[-1][1] == hi and kids[0][1] == kids[1][0]
                assert all(Q.contains(c) for c in Q.children())


def test_ancestor_examples():
    g = standard_grid(1, 1, 4, 4)
    Q = Cube(1, 2, (0,), g)
    assert ancestor(Q, 1) == Cube(1, 1, (0,), g)
    assert ancestor(Q, 0) == Q
    with pytest.raises(ValueError):
        ancestor(Q, 3)


def test_ancestor_of_child_exhaustive():
    g = standard_grid(1, 1, 4, 4)
    for Q in g.all_cubes(1, 3):
        for c in Q.children():
            assert ancestor(c, 1) == Q


def test_sample_omega_deterministic_and_fair():
    assert sample_omega(7, 1, 5) == sample_omega(7, 1, 5)
    assert sample_omega(7, 1, 0) == ()
    bits = np.array(sample_omega(1, 1, 10_000))
    assert abs(bits.mean() - 0.5) < 0.02


def test_all_omegas_count():
    assert len(list(all_omegas(2, 2))) == 16


@given(st.integers(0, 3), st.integers(0, 3))
def test_rectangle_measure(j1, j2):
    g = standard_grid(1, 1, 3, 3)
    R = Rectangle(Cube(1, j1, (0,), g), Cube(2, j2, (0,), g))
    assert R.measure == Fraction(1, 2 ** (j1 + j2))
    assert R.indicator().sum() == 2 ** (6 - j1 - j2)
