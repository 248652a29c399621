import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_int_function
from dyadiclab.geometry import Cube, GridSpec, Rectangle, sample_omega, shifted_grid
from dyadiclab.haar import GridFunction, HaarSymbol, Mesh, haar_tensor
from dyadiclab.operators import (CLASSES, FULL, PARTIAL, SHIFT, AdmissibilityError, CancellationPattern,
                                 FullParaproductSpec, PartialParaproductSpec, ShiftSpec, all_patterns, dumps_spec,
                                 form_oracle, loads_spec, partial_adjoint, random_admissible_spec, validate_pattern)
from dyadiclab.scalar import EXACT, FLOAT, ExactArray, convert, to_float

N = 3
MESH = Mesh(1, 1, N, N)
GRID = GridSpec(1, 1, N, N)
K = Cube(1, 0, (0,), GRID)
V = Cube(2, 0, (0,), GRID)
COMPLEXITY = {SHIFT: ((1, 0, 1), (0, 1, 0)), PARTIAL: ((1, 0, 0), (0, 0, 0)), FULL: ((0, 0, 0), (0, 0, 0))}


def rf(rng, backend=EXACT):
    return random_int_function(MESH, rng, backend)


def test_pattern_counts():
    for kind in CLASSES:
        pats = all_patterns(kind)
        assert len(pats) == 9
        for p in pats:
            validate_pattern(kind, p)
    with pytest.raises(ValueError):
        validate_pattern(SHIFT, CancellationPattern("ccc", "cc0"))
    validate_pattern(SHIFT, CancellationPattern("ccc", "cc0"), permissive=True)


def test_single_coefficient_shift():
    a = 0.75
    spec = ShiftSpec(1, 1, N, N, pattern=CancellationPattern("cc0", "cc0"),
                     tables={(0, 0): np.full((1,) * 8, a)})
    h = haar_tensor(MESH, HaarSymbol.cancel(K), HaarSymbol.cancel(V))
    out = spec.apply(h, h)
    assert np.allclose(out.values, a * Rectangle(K, V).indicator())
    assert spec.apply(GridFunction.zeros(MESH), h).is_zero()


def test_shift_rejects_oversized_coefficient():
    with pytest.raises(AdmissibilityError):
        ShiftSpec(1, 1, N, N, tables={(0, 0): np.full((1,) * 8, 1.5)})


def test_full_paraproduct_single_coefficient():
    b = haar_tensor(MESH, HaarSymbol.cancel(K), HaarSymbol.cancel(V), EXACT)
    spec = FullParaproductSpec(1, 1, N, N, pattern=CancellationPattern("00c", "00c"), b=b)
    one = GridFunction(MESH, Rectangle(K, V).indicator().astype(float)).to_exact()
    assert (spec.apply(one, one) - b).is_zero()
    const = FullParaproductSpec(1, 1, N, N, pattern=CancellationPattern("00c", "00c"),
                                b=GridFunction.constant(MESH, 2, EXACT))
    rng = np.random.default_rng(0)
    assert const.apply(rf(rng), rf(rng)).is_zero()


def test_full_paraproduct_second_form_by_duality():
    # the output-noncancellative form is the 1* adjoint of the output-cancellative one
    rng = np.random.default_rng(1)
    b = rf(rng)
    A = FullParaproductSpec(1, 1, N, N, pattern=CancellationPattern("00c", "00c"), b=b)
    B = FullParaproductSpec(1, 1, N, N, pattern=CancellationPattern("c00", "c00"), b=b)
    f1, f2, f3 = rf(rng), rf(rng), rf(rng)
    assert A.form(f1, f2, f3) == B.form(f3, f2, f1)


def test_partial_paraproduct_mirror():
    rng = np.random.default_rng(2)
    s = random_admissible_spec(rng, PARTIAL, (1, 0, 1), (0, 0, 0), "c0c/0c0", N1=N, N2=N)
    mirror = PartialParaproductSpec(1, 1, N, N, (0, 0, 0), s.k, CancellationPattern(s.pattern.p2, s.pattern.p1),
                                    symbols=s.symbols, para_param=1)
    f1, f2 = rf(rng), rf(rng)

    def swap(f):
        return GridFunction(MESH, f.values.transpose(1, 0))

    assert (mirror.apply(swap(f1), swap(f2)) - swap(s.apply(f1, f2))).is_zero()


def test_partial_paraproduct_zero_symbols():
    rng = np.random.default_rng(3)
    s = random_admissible_spec(rng, PARTIAL, (1, 0, 0), (0, 0, 0), saturation=0, N1=N, N2=N)
    assert s.apply(rf(rng), rf(rng)).is_zero()


@pytest.mark.parametrize("kind", CLASSES)
def test_form_matches_oracle_and_adjoints(kind):
    rng = np.random.default_rng(4)
    k, v = COMPLEXITY[kind]
    for pat in all_patterns(kind)[::4]:
        spec = random_admissible_spec(rng, kind, k, v, pat, N1=N, N2=N, magnitude="uniform")
        grid = shifted_grid(1, 1, N, N, sample_omega(rng, 1, N), sample_omega(rng, 1, N))
        f1, f2, f3 = rf(rng), rf(rng), rf(rng)
        val = spec.form(f1, f2, f3, grid)
        assert val == spec.apply(f1, f2, grid).inner(f3)
        assert val == form_oracle(spec, f1, f2, f3, grid)
        assert val == spec.adjoint("1*").form(f3, f2, f1, grid)
        assert val == partial_adjoint(spec, "2*").form(f1, f3, f2, grid)
        fl = spec.astype(FLOAT).form(f1.to_float(), f2.to_float(), f3.to_float(), grid)
        assert fl == pytest.approx(float(val), rel=1e-9, abs=1e-9)


def test_adjoint_bookkeeping():
    rng = np.random.default_rng(5)
    spec = random_admissible_spec(rng, SHIFT, (1, 0, 2), (0, 1, 0), "0cc/c0c", N1=N, N2=N)
    a1 = spec.adjoint("1*")
    assert a1.eff_pattern == CancellationPattern("cc0", "c0c")
    assert a1.eff_k == (2, 0, 1)
    assert a1.adjoint("1*").perm == (0, 1, 2)
    assert spec.adjoint("2*").eff_pattern == CancellationPattern("0cc", "cc0")
    f1, f2, f3 = rf(rng), rf(rng), rf(rng)
    assert a1.adjoint("1*").form(f1, f2, f3) == spec.form(f1, f2, f3)


def test_saturation_zero_is_zero_operator():
    rng = np.random.default_rng(6)
    spec = random_admissible_spec(rng, SHIFT, (1, 1, 1), (1, 1, 1), saturation=0, N1=N, N2=N)
    assert spec.apply(rf(rng), rf(rng)).is_zero()


@settings(max_examples=15)
@given(st.integers(0, 10 ** 6), st.sampled_from(CLASSES), st.integers(0, 8))
def test_generated_specs_round_trip(seed, kind, pidx):
    rng = np.random.default_rng(seed)
    k, v = COMPLEXITY[kind]
    spec = random_admissible_spec(rng, kind, k, v, all_patterns(kind)[pidx], N1=N, N2=N)
    back = loads_spec(dumps_spec(spec))
    f1, f2, f3 = rf(rng), rf(rng), rf(rng)
    assert back.form(f1, f2, f3) == spec.form(f1, f2, f3)


def test_corrupted_coefficient_is_rejected():
    spec = random_admissible_spec(np.random.default_rng(7), SHIFT, (0, 0, 0), (0, 0, 0), N1=2, N2=2)
    text = dumps_spec(spec)
    lines = text.splitlines()
    for i, ln in enumerate(lines):
        if ln.startswith("entry"):
            tok = ln.split()
            tok[-2] = str(2 * int(tok[-2]) if tok[-2] != "0" else 2)
            lines[i] = " ".join(tok)
            break
    with pytest.raises(AdmissibilityError):
        loads_spec("\n".join(lines) + "\n")


@given(st.integers(0, 10 ** 6))
def test_bilinearity(seed):
    rng = np.random.default_rng(seed)
    spec = random_admissible_spec(rng, SHIFT, (1, 0, 0), (0, 0, 1), N1=N, N2=N, backend=FLOAT)
    f, g, h = rf(rng, FLOAT), rf(rng, FLOAT), rf(rng, FLOAT)
    lhs = spec.apply(f * 2.0 + g, h).values
    rhs = 2.0 * spec.apply(f, h).values + spec.apply(g, h).values
    assert np.allclose(lhs, rhs, atol=1e-10)
