import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dyadiclab.haar import GridFunction, Mesh
from dyadiclab.normlab import (CSV_HEADER, ConfigError, ExperimentConfig, ExperimentReport, banach_range_suite,
                               commutator_batch, complexity_scan, estimate_operator_norm, from_bilinear,
                               identity_suite, loglog_slope, model_batch, pointwise_batch, run_suite,
                               stable_within, unit_bmo_symbol, zero_batch, zoo_input)
from dyadiclab.operators import SHIFT, ShiftSpec, dumps_spec, random_admissible_spec
from dyadiclab.scalar import FLOAT
from dyadiclab.spaces import ExponentTriple, little_bmo, lp_norm

N = 3
MESH = Mesh(1, 1, N, N)


def test_zero_operator_norm():
    assert estimate_operator_norm(zero_batch(), (4, 4, 2), MESH, trials=9).value == 0


def test_pointwise_product_norm_is_holder():
    est = estimate_operator_norm(pointwise_batch(), (4, 4, 2), MESH, trials=30)
    assert est.value <= 1 + 1e-12
    assert est.value >= 0.999  # equality for f1 = f2 = indicator


def _shift_single(a=1.0):
    return ShiftSpec(1, 1, N, N, tables={(0, 0): np.full((1,) * 8, a)})


def test_single_coefficient_shift_norm_oracle():
    # one Haar tuple: |a| ||h||_{p'} ||h||_{q'} ||h^0||_r on the unit square, all equal to 1
    spec = _shift_single(0.5)
    est = estimate_operator_norm(model_batch(spec), (4, 4, 2), MESH, trials=60)
    assert est.value <= 0.5 + 1e-9
    assert est.value >= 0.5 * 0.98


def test_batched_model_matches_gridfunction_path():
    rng = np.random.default_rng(0)
    spec = random_admissible_spec(rng, SHIFT, (1, 0, 1), (0, 1, 0), N1=N, N2=N, backend=FLOAT)
    b = unit_bmo_symbol(MESH, rng)
    fast = commutator_batch(model_batch(spec), b.values, 1)
    from dyadiclab.commutators import commutator
    slow = from_bilinear(commutator(spec, 1, b), MESH)
    X = np.stack([zoo_input(MESH, rng, "haar") for _ in range(3)])
    Y = np.stack([zoo_input(MESH, rng, "indicator") for _ in range(3)])
    assert np.allclose(fast(X, Y), slow(X, Y), atol=1e-12)


@pytest.mark.parametrize("slot", [1, 2])
def test_commutator_batch_adjoints(slot):
    rng = np.random.default_rng(1)
    spec = random_admissible_spec(rng, SHIFT, (1, 1, 0), (0, 0, 1), N1=N, N2=N, backend=FLOAT)
    op = commutator_batch(model_batch(spec), unit_bmo_symbol(MESH, rng).values, slot)
    X1, X2, G = (rng.standard_normal((2,) + MESH.shape) for _ in range(3))
    lhs = np.sum(op(X1, X2) * G)
    assert np.sum(X1 * op.adj1(G, X2)) == pytest.approx(lhs, rel=1e-10)
    assert np.sum(X2 * op.adj2(X1, G)) == pytest.approx(lhs, rel=1e-10)


def test_norm_monotone_in_trials():
    rng = np.random.default_rng(2)
    spec = random_admissible_spec(rng, SHIFT, N1=N, N2=N, backend=FLOAT)
    op = commutator_batch(model_batch(spec), unit_bmo_symbol(MESH, rng).values, 1)
    vals = [estimate_operator_norm(op, (3, 3, 1.5), MESH, trials=t, seed=4).value for t in (6, 12, 24)]
    assert vals[0] <= vals[1] <= vals[2]
    est = estimate_operator_norm(op, (3, 3, 1.5), MESH, trials=24, seed=4)
    assert est.running_max()[-1] == est.value


def test_constant_symbol_scan_is_zero():
    b = GridFunction.constant(MESH, 1.0)
    rep = complexity_scan(N, [(0, 0, 0), (1, 1, 1)], [(4, 4, 2)], trials=6, b=b)
    assert all(r.value == 0 for r in rep.rows)


def test_scan_row_matches_direct_estimate():
    rep = complexity_scan(N, [(0, 0, 0)], [(4, 4, 2)], trials=12, seed=3)
    rng = np.random.default_rng([3, 7])
    b = unit_bmo_symbol(MESH, rng)
    spec = random_admissible_spec(np.random.default_rng([3, 0]), SHIFT, N1=N, N2=N, backend=FLOAT)
    est = estimate_operator_norm(commutator_batch(model_batch(spec), b.values, 1), (4, 4, 2), MESH, 12, 3)
    assert rep.rows[0].value == est.value


def test_unit_bmo_symbol_normalized():
    b = unit_bmo_symbol(Mesh(1, 1, 4, 4), np.random.default_rng(5))
    assert little_bmo(b) == pytest.approx(1.0)


def test_stability_and_slope_helpers():
    assert stable_within([1.0, 1.2, 1.4], 0.2)
    assert not stable_within([1.0, 2.0], 0.3)
    assert loglog_slope([0, 1, 3], [1.0, 2.0, 4.0]) == pytest.approx(1.0)


def test_banach_suite_zero_symbols():
    rep = banach_range_suite(2, [(3, 3, 1.5)], trials=3, classes=(SHIFT,), duality=False)
    assert rep.passed and len(rep.rows) == 18


def test_identity_suite_small():
    rep = identity_suite(3, range(2))
    assert rep.passed and rep.aggregates["worst_relative_residual"] == 0


def test_report_files(tmp_path):
    rep = complexity_scan(N, [(0, 0, 0), (1, 1, 1)], [(4, 4, 2)], trials=6)
    csv_path, json_path = rep.write(str(tmp_path))
    with open(csv_path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == CSV_HEADER and len(rows) == 3
    data = json.loads(open(json_path).read())
    assert "slope_p4_q4_r2" in data["aggregates"]


def test_run_suite_exit_codes(tmp_path):
    code, rep = run_suite({"experiments": []})
    assert code == 0 and rep.rows == []
    assert run_suite({"experiments": [{"kind": "nope"}]})[0] == 2
    assert run_suite({"experiments": [], "depth": 0})[0] == 2
    assert run_suite({"experiments": [{"kind": "complexity_scan", "triples": [[2, 2, 2]]}]})[0] == 2
    assert run_suite(str(tmp_path / "missing.json"))[0] == 2
    code, _ = run_suite({"experiments": [{"kind": "complexity_scan", "complexities": [0, 1], "trials": 6,
                                          "slope_limit": -100.0}]})
    assert code == 1


def test_run_suite_identities_exit_zero():
    code, rep = run_suite({"depth": 3, "backend": "exact", "experiments": [{"kind": "identities", "seeds": 2}]})
    assert code == 0


def test_corrupted_spec_in_config_rejected():
    spec = random_admissible_spec(np.random.default_rng(0), SHIFT, N1=2, N2=2)
    text = dumps_spec(spec)
    lines = text.splitlines()
    for i, ln in enumerate(lines):
        if ln.startswith("entry"):
            tok = ln.split()
            tok[-2] = str(2 * int(tok[-2]))
            lines[i] = " ".join(tok)
            break
    cfg = {"experiments": [{"kind": "estimate_norm", "spec": "\n".join(lines) + "\n"}]}
    assert run_suite(cfg)[0] == 2
    cfg["experiments"][0]["spec"] = text
    ExperimentConfig.from_dict(cfg)


def test_config_unknown_key():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiments": [], "colour": "blue"})


def test_reports_are_reproducible():
    a = complexity_scan(N, [(0, 0, 0), (1, 1, 1)], [(3, 3, 1.5)], trials=8, seed=9)
    b = complexity_scan(N, [(0, 0, 0), (1, 1, 1)], [(3, 3, 1.5)], trials=8, seed=9)
    assert [r.as_list() for r in a.rows] == [r.as_list() for r in b.rows]


@settings(max_examples=10)
@given(st.integers(0, 10 ** 6), st.sampled_from(["haar", "indicator", "bump"]))
def test_zoo_inputs_nonzero_and_supported(seed, kind):
    x = zoo_input(MESH, np.random.default_rng(seed), kind)
    assert x.shape == MESH.shape and np.any(x != 0)
