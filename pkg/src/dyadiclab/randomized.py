"""Random dyadic grids, randomized square functions and exceptional sets.

Ensembles enumerate (or sample) the digit sequences of both parameters.  The
square functions use the mesh-aligned maximal function with dyadic side
lengths.  The exceptional-set builder follows the restricted weak type
argument: level sets of a square-function product, their maximal
enlargements, and the rectangles that are at least half covered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable

import numpy as np

from .commutators import paraproduct_A, paraproduct_a
from .geometry import Cube, GridSpec, Rectangle, all_omegas, sample_omega
from .haar import (GridFunction, HaarSymbol, Mesh, average, level_ops, one_param_pairing,
                   partial_average, partial_pairing)
from .operators import _ModelBase
from .scalar import EXACT, FLOAT, ExactArray, QSqrt2, is_zero, to_float
from .spaces import ExponentTriple, lp_norm, phi_b, strong_max_nd

EXHAUSTIVE = "exhaustive"
MONTE_CARLO = "monte_carlo"
TRIVIAL = "trivial"


# ---------------------------------------------------------------------------
# Ensembles


@dataclass(frozen=True)
class GridEnsemble:
    """A family of grid pairs (omega, omega')."""

    n: int
    m: int
    N1: int
    N2: int
    mode: str = EXHAUSTIVE
    trials: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (EXHAUSTIVE, MONTE_CARLO, TRIVIAL):
            raise ValueError(f"unknown ensemble mode {self.mode!r}")
        if self.mode == MONTE_CARLO and self.trials < 1:
            raise ValueError("Monte Carlo ensembles need at least one trial")

    @classmethod
    def for_mesh(cls, mesh: Mesh, mode: str = EXHAUSTIVE, trials: int = 8, seed: int = 0) -> "GridEnsemble":
        return cls(mesh.n, mesh.m, mesh.N1, mesh.N2, mode, trials, seed)

    def _marginal(self, param: int) -> list:
        d = self.n if param == 1 else self.m
        N = self.N1 if param == 1 else self.N2
        if self.mode == TRIVIAL:
            return [None]
        if self.mode == EXHAUSTIVE:
            return list(all_omegas(d, N))
        rng = np.random.default_rng([self.seed, param])
        return [sample_omega(rng, d, N) for _ in range(self.trials)]

    def omegas(self, param: int) -> list:
        return self._marginal(param)

    def pairs(self) -> list:
        if self.mode == MONTE_CARLO:
            return list(zip(self._marginal(1), self._marginal(2)))
        return list(product(self._marginal(1), self._marginal(2)))

    def grids(self) -> list[GridSpec]:
        return [GridSpec(self.n, self.m, self.N1, self.N2, a or (), b or ()) for a, b in self.pairs()]

    def grids_param(self, param: int) -> list[GridSpec]:
        """Grids varying in one parameter only (the other is standard)."""
        out = []
        for om in self._marginal(param):
            if param == 1:
                out.append(GridSpec(self.n, self.m, self.N1, self.N2, om or (), ()))
            else:
                out.append(GridSpec(self.n, self.m, self.N1, self.N2, (), om or ()))
        return out

    def __len__(self):
        return len(self.pairs())


def _mean(values: list):
    if not values:
        raise ValueError("empty ensemble")
    total = values[0]
    for v in values[1:]:
        total = total + v
    k = len(values)
    if isinstance(total, GridFunction):
        if total.backend == EXACT:
            return GridFunction(total.mesh, total.values * QSqrt2(_frac(k)))
        return GridFunction(total.mesh, total.values / k)
    if isinstance(total, (QSqrt2, ExactArray)):
        return total * QSqrt2(_frac(k))
    return total / k


def _frac(k: int):
    from fractions import Fraction
    return Fraction(1, k)


def grid_expectation(ensemble: GridEnsemble, estimand: Callable[[GridSpec], object], grids=None):
    """Average of estimand(grid) over the ensemble (exact mean for EXHAUSTIVE)."""
    grids = ensemble.grids() if grids is None else grids
    return _mean([estimand(g) for g in grids])


# ---------------------------------------------------------------------------
# Operator families


@dataclass
class OperatorFamily:
    """grid -> linear map on GridFunctions."""

    name: str
    build: Callable[[GridSpec], Callable[[GridFunction], GridFunction]]

    def __call__(self, grid: GridSpec) -> Callable[[GridFunction], GridFunction]:
        return self.build(grid)


def identity_family() -> OperatorFamily:
    return OperatorFamily("identity", lambda grid: (lambda f: f))


def phi_family(b: GridFunction, axis: int = 1) -> OperatorFamily:
    return OperatorFamily(f"phi_b_axis{axis}", lambda grid: (lambda f: phi_b(b, f, axis, grid)))


def paraproduct_a_family(axis: int, i: int, b: GridFunction) -> OperatorFamily:
    return OperatorFamily(f"a{axis}_{i}", lambda grid: (lambda f: paraproduct_a(axis, i, b, f, grid)))


def paraproduct_A_family(i: int, b: GridFunction) -> OperatorFamily:
    return OperatorFamily(f"A_{i}", lambda grid: (lambda f: paraproduct_A(i, b, f, grid)))


def commutator_a_family(i: int, b1: GridFunction, b2: GridFunction, axis: int = 1) -> OperatorFamily:
    """[b2, a^axis_i(b1, .)]."""

    def build(grid):
        def op(f):
            return b2 * paraproduct_a(axis, i, b1, f, grid) - paraproduct_a(axis, i, b1, b2 * f, grid)
        return op

    return OperatorFamily(f"[b2,a{axis}_{i}(b1)]", build)


# ---------------------------------------------------------------------------
# Randomized square functions


def _window_masks(grid: GridSpec, mesh: Mesh, param: int, level: int) -> np.ndarray:
    """Indicators of the level-`level` window cubes, shape (roots,) + param cell shape."""
    N = mesh.depth(param)
    d = mesh.dim(param)
    s = 1 << (N - level)
    offs = grid.shift_cells(param, level)
    size = 2 << N
    one_d = []
    for o in offs:
        a = np.zeros((1 << level, size), dtype=bool)
        for t in range(1 << level):
            a[t, o + t * s:o + (t + 1) * s] = True
        one_d.append(a)
    if d == 1:
        return one_d[0]
    roots = list(product(range(1 << level), repeat=d))
    out = np.zeros((len(roots),) + (size,) * d, dtype=bool)
    for r, pos in enumerate(roots):
        sl = tuple(slice(o + t * s, o + (t + 1) * s) for o, t in zip(offs, pos))
        out[(r,) + sl] = True
    return out


def _piece_max_squares(G: np.ndarray, mesh: Mesh, masks, params) -> np.ndarray:
    """Sum over roots of (M (G 1_root))^2, M acting on `params`."""
    n, m = mesh.n, mesh.m
    if params == (1, 2):
        m1, m2 = masks
        a = m1.reshape((m1.shape[0], 1) + m1.shape[1:] + (1,) * m)
        b = m2.reshape((1, m2.shape[0]) + (1,) * n + m2.shape[1:])
        pieces = (G * a * b).reshape((-1,) + G.shape)
    elif params == (1,):
        a = masks[0].reshape((masks[0].shape[0],) + masks[0].shape[1:] + (1,) * m)
        pieces = G * a
    else:
        b = masks[0].reshape((masks[0].shape[0],) + (1,) * n + masks[0].shape[1:])
        pieces = G * b
    Mx = strong_max_nd(pieces, mesh, batch_axes=1, family="dyadic", params=params)
    return (Mx ** 2).sum(axis=0)


def _square_energy_on_grid(f: GridFunction, grid: GridSpec, kind: str, i: int, j: int,
                           family: OperatorFamily) -> np.ndarray:
    mesh = f.mesh
    x = to_float(family(grid)(f).values) if f.backend == EXACT else np.asarray(family(grid)(f).values, dtype=float)
    L1, L2 = level_ops(grid, mesh)
    acc = np.zeros(mesh.shape)
    if kind == "S":
        for jV in range(mesh.N2 - j):
            d2 = L2.D(x, jV + j)
            m2 = _window_masks(grid, mesh, 2, jV)
            for jK in range(mesh.N1 - i):
                G = L1.D(d2, jK + i)
                acc += _piece_max_squares(G, mesh, (_window_masks(grid, mesh, 1, jK), m2), (1, 2))
    elif kind == "S1":
        for jK in range(mesh.N1 - i):
            acc += _piece_max_squares(L1.D(x, jK + i), mesh, (_window_masks(grid, mesh, 1, jK),), (1,))
    elif kind == "S2":
        for jV in range(mesh.N2 - j):
            acc += _piece_max_squares(L2.D(x, jV + j), mesh, (_window_masks(grid, mesh, 2, jV),), (2,))
    else:
        raise ValueError(f"unknown square function kind {kind!r}")
    return acc


def randomized_square_function(f: GridFunction, family: OperatorFamily | None = None, kind: str = "S",
                               ij=(0, 0), ensemble: GridEnsemble | None = None) -> GridFunction:
    """S^{i,j}_U f (kind "S"), S^1_{i,U} f ("S1") or S^2_{j,U} f ("S2"), float valued."""
    mesh = f.mesh
    i, j = ij
    if i < 0 or j < 0 or i >= max(mesh.N1, 1) or j >= max(mesh.N2, 1):
        raise ValueError("block depths must lie within the grid depth")
    family = family or identity_family()
    ensemble = ensemble or GridEnsemble.for_mesh(mesh, TRIVIAL)
    if kind == "S1":
        grids = ensemble.grids_param(1)
    elif kind == "S2":
        grids = ensemble.grids_param(2)
    else:
        grids = ensemble.grids()
    energy = _mean([_square_energy_on_grid(f, g, kind, i, j, family) for g in grids])
    return GridFunction(mesh, np.sqrt(energy))


# ---------------------------------------------------------------------------
# Exceptional sets


def _standard_rect_means(x: np.ndarray, mesh: Mesh, jK: int, jV: int) -> np.ndarray:
    """Means of x over standard rectangles K x V inside [0,1)^{n+m}; shape (2^jK,)*n + (2^jV,)*m."""
    n, m, N1, N2 = mesh.n, mesh.m, mesh.N1, mesh.N2
    sub = x[(slice(0, 1 << N1),) * n + (slice(0, 1 << N2),) * m].astype(float)
    shp = []
    for _ in range(n):
        shp += [1 << jK, 1 << (N1 - jK)]
    for _ in range(m):
        shp += [1 << jV, 1 << (N2 - jV)]
    return sub.reshape(shp).mean(axis=tuple(range(1, 2 * (n + m), 2)))


def default_c1(n: int, m: int) -> float:
    return 3.0 ** (-(n + m)) / 4.0


@dataclass
class ExceptionalSets:
    mesh: Mesh
    r: float
    c1: float
    C0: float
    thresholds: list
    omega: list            # u -> bool cells
    omega_tilde: list      # u -> bool cells
    R_hat: list            # u -> {(jK, jV): bool array over positions}
    R: list                # u -> same, differences
    E: np.ndarray
    E_prime: np.ndarray
    doublings: int = 0

    @property
    def cell_measure(self) -> float:
        return 2.0 ** (-self.mesh.log_cell)

    def measure(self, cells: np.ndarray) -> float:
        return float(np.count_nonzero(cells)) * self.cell_measure

    @property
    def E_fraction(self) -> float:
        return self.measure(self.E_prime) / self.measure(self.E)

    def table(self) -> list[dict]:
        rows = []
        for u in range(len(self.omega)):
            rows.append({"u": u, "threshold": self.thresholds[u], "omega": self.measure(self.omega[u]),
                         "omega_tilde": self.measure(self.omega_tilde[u]),
                         "n_R": int(sum(np.count_nonzero(a) for a in self.R[u].values()))})
        return rows


def build_exceptional_sets(combo: np.ndarray, E: np.ndarray, mesh: Mesh, r: float, c1: float | None = None,
                           C0: float = 1.0, target: float = 0.99, max_doublings: int = 200,
                           max_u: int = 64) -> ExceptionalSets:
    """Level sets of `combo` at C0 2^-u |E|^{-1/r}, with C0 doubled until |E'| >= target |E|."""
    E = np.asarray(E, dtype=bool)
    if not E.any():
        raise ValueError("E must be nonempty")
    combo = np.asarray(combo, dtype=float)
    c1 = default_c1(mesh.n, mesh.m) if c1 is None else c1
    cell = 2.0 ** (-mesh.log_cell)
    E_meas = np.count_nonzero(E) * cell
    base = E_meas ** (-1.0 / r)

    def enlarge(cells):
        return strong_max_nd(cells.astype(float), mesh) > c1

    doublings = 0
    while True:
        om0 = combo > C0 * base
        Et0 = enlarge(om0)
        Ep = E & ~Et0
        if np.count_nonzero(Ep) >= target * np.count_nonzero(E):
            break
        if doublings >= max_doublings:
            raise RuntimeError("C0 calibration did not converge")
        C0 *= 2.0
        doublings += 1
    pos = combo[combo > 0]
    u_top = 0
    if pos.size:
        u_top = int(min(max_u, max(0, math.ceil(math.log2(C0 * base / pos.min())) + 1)))
    levels = [(a, b) for a in range(mesh.N1 + 1) for b in range(mesh.N2 + 1)]
    thresholds, omegas, tildes, hats, diffs = [], [], [], [], []
    prev = None
    for u in range(u_top + 1):
        t = C0 * 2.0 ** (-u) * base
        om = combo > t
        thresholds.append(t)
        omegas.append(om)
        tildes.append(enlarge(om) if u else Et0)
        hat = {key: _standard_rect_means(om, mesh, *key) >= 0.5 for key in levels}
        hats.append(hat)
        diffs.append({key: hat[key] & ~prev[key] for key in levels} if prev else dict(hat))
        prev = hat
    return ExceptionalSets(mesh, r, c1, C0, thresholds, omegas, tildes, hats, diffs, E, Ep, doublings)


def _standard_rectangle(mesh: Mesh, jK: int, posK, jV: int, posV) -> Rectangle:
    g = GridSpec(mesh.n, mesh.m, mesh.N1, mesh.N2)
    return Rectangle(Cube(1, jK, tuple(int(t) for t in posK), g), Cube(2, jV, tuple(int(t) for t in posV), g))


def containment_violations(sets: ExceptionalSets) -> int:
    """Number of (u, R) with R in R_hat_u and 3R not inside Omega~_u."""
    mesh = sets.mesh
    n = mesh.n
    bad = 0
    for u, hat in enumerate(sets.R_hat):
        cells = sets.omega_tilde[u]
        for (jK, jV), arr in hat.items():
            for idx in zip(*np.nonzero(arr)):
                R = _standard_rectangle(mesh, jK, idx[:n], jV, idx[n:])
                if not np.all(cells[R.triple_slices(cells.shape)]):
                    bad += 1
    return bad


# ---------------------------------------------------------------------------
# Localisation


def localisation_term(b: GridFunction, f3: GridFunction, I3: Cube, J3: Cube):
    """<(<b>_{I3,1} - <b>_{I3 x J3}) <f3, h_I3>_1, h^0_J3>."""
    diff = partial_average(b, I3) - average(b, Rectangle(I3, J3))
    g = diff * partial_pairing(f3, 1, HaarSymbol.cancel(I3))
    return one_param_pairing(g, HaarSymbol.noncancel(J3))


def localisation_residual(b: GridFunction, f3: GridFunction, I3: Cube, J3: Cube):
    """Change of the localisation term when f3 is cut down to I3 x J3 (exactly zero)."""
    mask = np.zeros(f3.mesh.shape, dtype=np.int64)
    mask[Rectangle(I3, J3).slices()] = 1
    cut = GridFunction(f3.mesh, f3.values * (mask if f3.backend == EXACT else mask.astype(float)))
    return localisation_term(b, f3, I3, J3) - localisation_term(b, cut, I3, J3)


# ---------------------------------------------------------------------------
# Restricted weak type experiment


def slot_combo(f: GridFunction, slot_pattern: tuple[bool, bool], k: int, v: int, ensemble: GridEnsemble) -> np.ndarray:
    """The square-function factor controlling one input slot."""
    c1, c2 = slot_pattern
    mesh = f.mesh
    if c1 and c2:
        k = min(k, mesh.N1 - 1)
        v = min(v, mesh.N2 - 1)
        return randomized_square_function(f, kind="S", ij=(k, v), ensemble=ensemble).values
    if c2:
        return randomized_square_function(f, kind="S2", ij=(0, min(v, mesh.N2 - 1)), ensemble=ensemble).values
    if c1:
        return randomized_square_function(f, kind="S1", ij=(min(k, mesh.N1 - 1), 0), ensemble=ensemble).values
    x = to_float(f.values) if f.backend == EXACT else f.values
    return strong_max_nd(x, mesh)


def _spec_for(spec, grid):
    return spec(grid) if callable(spec) and not isinstance(spec, _ModelBase) else spec


def commutator_contributions(spec, b: GridFunction, f1: GridFunction, f2: GridFunction, f3: GridFunction,
                             grids: list[GridSpec]) -> dict:
    """E over grids of the tree-by-tree parts of <[b, S]_1(f1, f2), f3>."""
    per = []
    for g in grids:
        S = _spec_for(spec, g)
        a = S.form_by_root(f1, f2, b * f3, g)
        c = S.form_by_root(b * f1, f2, f3, g)
        per.append({key: a[key] - c[key] for key in a})
    keys = per[0].keys()
    return {key: _mean([p[key] for p in per]) for key in keys}


def commutator_kernel(spec, b: GridFunction, f1: GridFunction, f2: GridFunction, grids: list[GridSpec]) -> GridFunction:
    """E over grids of [b, S]_1(f1, f2)."""
    outs = []
    for g in grids:
        S = _spec_for(spec, g)
        outs.append(b * S.apply(f1, f2, g) - S.apply(b * f1, f2, g))
    return _mean(outs)


def _sum_exact_or_float(vals, backend):
    total = QSqrt2(0) if backend == EXACT else 0.0
    for v in vals:
        total = total + v
    return total


def _select(arr, mask: np.ndarray, backend: str):
    """Sum of arr entries where mask holds."""
    if not mask.any():
        return QSqrt2(0) if backend == EXACT else 0.0
    if backend == EXACT:
        return (arr * mask.astype(np.int64)).sum()
    return float(np.asarray(arr)[mask].sum())


def reindex_contributions(contrib: dict, sets: ExceptionalSets, backend: str) -> dict:
    """Split the (K, V) sum along the disjoint collections R_u."""
    mesh = sets.mesh
    n, m = mesh.n, mesh.m
    partial = []
    covered = {}
    for u, coll in enumerate(sets.R):
        vals = []
        for (jK, jV), arr in contrib.items():
            mask = coll[(jK, jV)].reshape(1 << (jK * n), 1 << (jV * m))
            vals.append(_select(arr, mask, backend))
            covered[(jK, jV)] = covered.get((jK, jV), np.zeros_like(mask)) | mask
        partial.append(_sum_exact_or_float(vals, backend))
    leftover_vals = []
    missing = 0
    for key, arr in contrib.items():
        rest = ~covered.get(key, np.zeros((1 << (key[0] * n), 1 << (key[1] * m)), dtype=bool))
        leftover_vals.append(_select(arr, rest, backend))
        a = np.asarray(to_float(arr) if backend == EXACT else arr)
        missing += int(np.count_nonzero((a != 0) & rest))
    total = _sum_exact_or_float([_select(a, np.ones(np.shape(to_float(a) if backend == EXACT else a), dtype=bool), backend)
                                 for a in contrib.values()], backend)
    reindexed = _sum_exact_or_float(partial + leftover_vals, backend)
    r0 = []
    for (jK, jV), arr in contrib.items():
        mask = sets.R_hat[0][(jK, jV)].reshape(1 << (jK * n), 1 << (jV * m))
        r0.append(_select(arr, mask, backend))
    return {"partial_sums": partial, "total": total, "residual": reindexed - total,
            "uncovered_relevant": missing, "R0_sum": _sum_exact_or_float(r0, backend)}


@dataclass
class RWTReport:
    ratio: float
    value: float
    reference: float
    C0: float
    E_measure: float
    E_prime_measure: float
    containment_violations: int
    reindex_residual: float
    R0_sum: float
    uncovered_relevant: int
    random_f3_ratios: list = field(default_factory=list)
    table: list = field(default_factory=list)
    seed: int | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def rwt_experiment(spec, b: GridFunction, triple: ExponentTriple, E: np.ndarray, f1: GridFunction,
                   f2: GridFunction, ensemble: GridEnsemble, random_f3: int = 4, seed: int = 0,
                   check_containment: bool = True, c1: float | None = None) -> RWTReport:
    """Restricted weak type pairing |<E[b,S]_1(f1, f2), f3>| with f3 sign-optimal on E'."""
    if not isinstance(triple, ExponentTriple):
        triple = ExponentTriple(*triple)
    mesh = f1.mesh
    grids = ensemble.grids()
    S0 = _spec_for(spec, grids[0])
    pat = S0.eff_pattern
    combo = np.ones(mesh.shape)
    for slot, f in ((0, f1), (1, f2)):
        cp = (pat.p1[slot] == "c", pat.p2[slot] == "c")
        combo = combo * slot_combo(f, cp, S0.eff_k[slot], S0.eff_v[slot], ensemble)
    norm = lp_norm(combo, triple.r, mesh=mesh)
    if norm > 0:
        combo = combo / norm
    sets = build_exceptional_sets(combo, E, mesh, triple.r, c1=c1)

    backend = f1.backend
    K = commutator_kernel(spec, b, f1, f2, grids)
    kv = to_float(K.values) if backend == EXACT else np.asarray(K.values)
    sign = np.sign(kv) * sets.E_prime
    if backend == EXACT:
        f3 = GridFunction(mesh, sign.astype(float)).to_exact()
    else:
        f3 = GridFunction(mesh, sign.astype(float))
    value = abs(float(to_float(K.inner(f3))))

    contrib = commutator_contributions(spec, b, f1, f2, f3, grids)
    rx = reindex_contributions(contrib, sets, backend)
    cmax = max(S0.k + S0.v)
    E_meas = sets.measure(E)
    reference = ((1 + cmax) * lp_norm(f1, triple.p, mesh=mesh) * lp_norm(f2, triple.q, mesh=mesh)
                 * E_meas ** (1.0 - 1.0 / triple.r))
    rng = np.random.default_rng(seed)
    rand = []
    for _ in range(random_f3):
        g = rng.uniform(-1.0, 1.0, size=mesh.shape) * sets.E_prime
        rand.append(abs(float(np.sum(to_float(kv) * g)) * sets.cell_measure) / reference if reference > 0 else 0.0)
    table = sets.table()
    for row, ps in zip(table, rx["partial_sums"]):
        row["partial_sum"] = float(to_float(ps))
    return RWTReport(
        ratio=value / reference if reference > 0 else 0.0,
        value=value, reference=reference, C0=sets.C0, E_measure=E_meas,
        E_prime_measure=sets.measure(sets.E_prime),
        containment_violations=containment_violations(sets) if check_containment else -1,
        reindex_residual=float(to_float(rx["residual"])), R0_sum=float(to_float(rx["R0_sum"])),
        uncovered_relevant=rx["uncovered_relevant"], random_f3_ratios=rand, table=table, seed=seed)


# ---------------------------------------------------------------------------
# Random inputs that do not depend on the depth


def coarse_random_function(mesh: Mesh, rng: np.random.Generator, level: int = 3, backend: str = FLOAT,
                           den: int = 64) -> GridFunction:
    """Piecewise constant on level-`level` cells of [0,1)^{n+m}, zero elsewhere; dyadic rational values."""
    lv1 = min(level, mesh.N1)
    lv2 = min(level, mesh.N2)
    coarse = rng.integers(-den, den + 1, size=(1 << level,) * mesh.n + (1 << level,) * mesh.m)
    # restrict to the resolution available on this mesh by block averaging the integer draws
    if lv1 < level or lv2 < level:
        shp = []
        for _ in range(mesh.n):
            shp += [1 << lv1, 1 << (level - lv1)]
        for _ in range(mesh.m):
            shp += [1 << lv2, 1 << (level - lv2)]
        coarse = coarse.reshape(shp).sum(axis=tuple(range(1, 2 * (mesh.n + mesh.m), 2)))
    arr = np.zeros(mesh.shape, dtype=np.int64)
    sub = coarse
    for ax in range(mesh.n + mesh.m):
        rep = 1 << ((mesh.N1 - lv1) if ax < mesh.n else (mesh.N2 - lv2))
        sub = np.repeat(sub, rep, axis=ax)
    arr[tuple(slice(0, s) for s in sub.shape)] = sub
    f = GridFunction(mesh, arr.astype(float) / den)
    return f.to_exact() if backend == EXACT else f


def coarse_random_set(mesh: Mesh, rng: np.random.Generator, level: int = 2, density: float = 0.5) -> np.ndarray:
    """Random union of level-`level` standard cells inside [0,1)^{n+m} (never empty)."""
    d = mesh.n + mesh.m
    pick = rng.random((1 << level,) * d) < density
    if not pick.any():
        pick.flat[rng.integers(pick.size)] = True
    out = np.zeros(mesh.shape, dtype=bool)
    sub = pick
    for ax in range(d):
        sub = np.repeat(sub, 1 << ((mesh.N1 if ax < mesh.n else mesh.N2) - level), axis=ax)
    out[tuple(slice(0, s) for s in sub.shape)] = sub
    return out
