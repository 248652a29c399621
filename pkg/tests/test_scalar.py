from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadiclab.scalar import (EXACT, FLOAT, ExactArray, QSqrt2, convert, einsum, sqrt2_pow, to_float)

fracs = st.fractions(min_value=-50, max_value=50, max_denominator=64)
q2 = st.builds(QSqrt2, fracs, fracs)


def test_sqrt2_squared():
    r = QSqrt2(0, 1)
    assert r * r == QSqrt2(2, 0)
    assert QSqrt2.sqrt2_pow(3) == QSqrt2(0, 2)
    assert QSqrt2.sqrt2_pow(-2) == QSqrt2(Fraction(1, 2))


def test_sign_of_near_cancellation():
    # 140/99 < sqrt(2) < 99/70
    assert QSqrt2(-Fraction(140, 99), 1).sign() == 1
    assert QSqrt2(-Fraction(99, 70), 1).sign() == -1


@given(q2, q2, q2)
def test_field_axioms(x, y, z):
    assert (x + y) * z == x * z + y * z
    assert x * y == y * x
    assert x - x == QSqrt2(0)


@given(q2)
def test_inverse(x):
    if x:
        assert x * x.inverse() == QSqrt2(1)


@given(q2, q2)
def test_ordering_matches_float(x, y):
    if abs(float(x) - float(y)) > 1e-9:
        assert (x < y) == (float(x) < float(y))


@given(q2)
def test_string_round_trip(x):
    assert QSqrt2.from_strings(*x.to_strings()) == x


@settings(max_examples=30)
@given(st.lists(st.integers(-100, 100), min_size=4, max_size=4), st.integers(-6, 6))
def test_exact_array_arithmetic(vals, k):
    a = ExactArray.from_fractions([Fraction(v, 8) for v in vals])
    s = sqrt2_pow(k, EXACT)
    got = (a * s + a).to_float()
    want = np.array(vals) / 8 * 2 ** (k / 2) + np.array(vals) / 8
    assert np.allclose(got, want, rtol=1e-12)


def test_dyadic_float_converts_exactly():
    x = np.array([0.5, -0.125, 3.0, 1 / 1024])
    e = convert(x, EXACT)
    assert np.array_equal(to_float(e), x)
    assert e.item(3) == QSqrt2(Fraction(1, 1024))


def test_exact_einsum_matches_float():
    rng = np.random.default_rng(0)
    A = rng.integers(-4, 5, size=(3, 4))
    B = rng.integers(-4, 5, size=(4, 2))
    got = einsum("ij,jk->ik", convert(A, EXACT), convert(B, EXACT))
    assert np.array_equal(to_float(got), A @ B)


def test_sqrt2_pow_float():
    assert sqrt2_pow(4, FLOAT) == pytest.approx(4.0)
