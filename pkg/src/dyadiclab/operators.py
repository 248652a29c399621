"""Bilinear bi-parameter model operators: shifts, partial paraproducts and full paraproducts.

Every model operator is evaluated through one engine.  For each pair of
root levels (jK, jV) a coefficient tensor

    A[K, V, I1, I2, I3, J1, J2, J3]

is contracted against the Haar coefficients of the inputs on the trees
below K and V.  Trees are rooted at the level-jK cubes of the grid that lie
in the unit window [o, o + 1) per axis, where o is the translation of that
level; below a root the grid is the standard dyadic tree of the root.

Slot order is (f1, f2, output).  A pattern is a pair of three-letter
strings over {'c', '0'}, one per parameter: 'c' puts a cancellative Haar
function in that slot, '0' a non-cancellative one.  Only the all-ones
signature is used for cancellative slots when the dimension exceeds one.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np

from .geometry import Cube, GridSpec
from .haar import (GridFunction, HaarSymbol, Mesh, analyze_axis, haar_pairing, lin,
                   synth_axis)
from .scalar import (EXACT, FLOAT, ExactArray, QSqrt2, backend_of, convert, einsum,
                     sqrt2_pow, to_float)

SHIFT = "shift"
PARTIAL = "partial"
FULL = "full"
CLASSES = (SHIFT, PARTIAL, FULL)

FORMS = {"A": "00c", "A1*": "c00", "A2*": "0c0"}
ADJOINTS = {"1*": (2, 1, 0), "2*": (0, 2, 1)}


class AdmissibilityError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Patterns


@dataclass(frozen=True)
class CancellationPattern:
    p1: str = "cc0"
    p2: str = "cc0"

    def __post_init__(self):
        for s in (self.p1, self.p2):
            if len(s) != 3 or any(ch not in "c0" for ch in s):
                raise ValueError(f"bad pattern string {s!r}")

    def param(self, param: int) -> str:
        return self.p1 if param == 1 else self.p2

    def permuted(self, perm) -> "CancellationPattern":
        return CancellationPattern("".join(self.p1[i] for i in perm), "".join(self.p2[i] for i in perm))

    def __str__(self):
        return f"{self.p1}/{self.p2}"

    @classmethod
    def parse(cls, text: str) -> "CancellationPattern":
        a, b = text.replace(",", "/").split("/")
        return cls(a.strip(), b.strip())


def all_patterns(kind: str) -> list[CancellationPattern]:
    """The nine patterns of a class (shift: one '0' per parameter; full: one 'c')."""
    one0 = ["0cc", "c0c", "cc0"]
    onec = ["c00", "0c0", "00c"]
    if kind == SHIFT:
        return [CancellationPattern(a, b) for a in one0 for b in one0]
    if kind == FULL:
        return [CancellationPattern(a, b) for a in onec for b in onec]
    if kind == PARTIAL:
        return [CancellationPattern(a, b) for a in one0 for b in onec]
    raise ValueError(kind)


def validate_pattern(kind: str, pattern: CancellationPattern, para_param: int = 2, permissive: bool = False):
    if permissive:
        return
    for param in (1, 2):
        s = pattern.param(param)
        if kind == SHIFT or (kind == PARTIAL and param != para_param):
            if s.count("0") != 1:
                raise ValueError(f"pattern {pattern} needs exactly one non-cancellative slot in parameter {param}")
        else:
            if s.count("c") != 1:
                raise ValueError(f"pattern {pattern} needs exactly one cancellative slot in parameter {param}")


# ---------------------------------------------------------------------------
# Tree coefficients on windows


def root_levels(N: int, k, pat: str) -> list[int]:
    top = min((N - 1 - ki) if ch == "c" else (N - ki) for ki, ch in zip(k, pat))
    return list(range(0, top + 1))


def _tree_analyze(x: np.ndarray, mesh: Mesh, grid: GridSpec, nb: int, roots, depths, cancels) -> np.ndarray:
    """Raw tree coefficients, shape batch + (nK, nI, nV, nJ)."""
    batch = x.shape[:nb]
    for param in (2, 1):
        N = mesh.depth(param)
        root, k, cancel = roots[param - 1], depths[param - 1], cancels[param - 1]
        L = root + k
        offs = grid.shift_cells(param, root)
        for ax, o in reversed(list(zip(mesh.axes(param), offs))):
            x = analyze_axis(x, nb + ax, o, 1 << L, 1 << (N - L), cancel)
    # split every axis into (root position, descendant index)
    split = []
    for param in (1, 2):
        root, k = roots[param - 1], depths[param - 1]
        split += [1 << root, 1 << k] * mesh.dim(param)
    x = x.reshape(batch + tuple(split))
    n, m = mesh.n, mesh.m
    ax = lambda i: nb + i
    order = ([ax(2 * a) for a in range(n)] + [ax(2 * a + 1) for a in range(n)]
             + [ax(2 * (n + a)) for a in range(m)] + [ax(2 * (n + a) + 1) for a in range(m)])
    x = x.transpose(tuple(range(nb)) + tuple(order))
    nK = 1 << (roots[0] * n)
    nI = 1 << (depths[0] * n)
    nV = 1 << (roots[1] * m)
    nJ = 1 << (depths[1] * m)
    return x.reshape(batch + (nK, nI, nV, nJ))


def _tree_synth(y: np.ndarray, mesh: Mesh, grid: GridSpec, nb: int, roots, depths, cancels) -> np.ndarray:
    batch = y.shape[:nb]
    n, m = mesh.n, mesh.m
    shp = ((1 << roots[0]),) * n + ((1 << depths[0]),) * n + ((1 << roots[1]),) * m + ((1 << depths[1]),) * m
    y = y.reshape(batch + shp)
    order = []
    for a in range(n):
        order += [nb + a, nb + n + a]
    for a in range(m):
        order += [nb + 2 * n + a, nb + 2 * n + m + a]
    y = y.transpose(tuple(range(nb)) + tuple(order))
    lv = [1 << (roots[0] + depths[0])] * n + [1 << (roots[1] + depths[1])] * m
    y = y.reshape(batch + tuple(lv))
    for param in (1, 2):
        N = mesh.depth(param)
        root, k, cancel = roots[param - 1], depths[param - 1], cancels[param - 1]
        L = root + k
        offs = grid.shift_cells(param, root)
        for ax, o in zip(mesh.axes(param), offs):
            y = synth_axis(y, nb + ax, o, 1 << (N - L), 2 << N, cancel)
    return y


def _analysis_exp(mesh: Mesh, roots, depths) -> int:
    L1, L2 = roots[0] + depths[0], roots[1] + depths[1]
    return (L1 - 2 * mesh.N1) * mesh.n + (L2 - 2 * mesh.N2) * mesh.m


def _synth_exp(mesh: Mesh, roots, depths) -> int:
    return (roots[0] + depths[0]) * mesh.n + (roots[1] + depths[1]) * mesh.m


def tree_coefficients(f: GridFunction, grid: GridSpec, roots, depths, cancels, nb: int = 0):
    """<f, h_I (x) h_J> for I, J below the window roots, indexed [K, I, V, J]."""
    raw = lin(f.values if isinstance(f, GridFunction) else f,
              lambda x: _tree_analyze(x, _mesh_of(grid), grid, nb, roots, depths, cancels))
    backend = backend_of(raw)
    return raw * sqrt2_pow(_analysis_exp(_mesh_of(grid), roots, depths), backend)


def _mesh_of(grid: GridSpec) -> Mesh:
    return Mesh(grid.n, grid.m, grid.N1, grid.N2)


# ---------------------------------------------------------------------------
# One-parameter bilinear paraproducts


def _one_param_levels(N: int):
    return range(N)


def apply_bilinear_paraproduct(b: GridFunction, form: str, g1: GridFunction, g2: GridFunction,
                               grid: GridSpec | None = None) -> GridFunction:
    """A_b, A_b^{1*} or A_b^{2*} over the window cubes of a one-parameter grid (all levels)."""
    if form not in FORMS:
        raise ValueError(f"unknown paraproduct form {form!r}")
    mesh = g1.mesh
    param = 1 if mesh.m == 0 else 2
    d = mesh.dim(param)
    N = mesh.depth(param)
    if grid is None:
        grid = GridSpec(d if param == 1 else 0, d if param == 2 else 0, N if param == 1 else 0, N if param == 2 else 0)
    backend = g1.backend
    pat = FORMS[form]
    out = None
    for j in _one_param_levels(N):
        offs = grid.shift_cells(param, j)
        s = 1 << (N - j)

        def an(x, cancel):
            for ax in reversed(range(d)):
                x = analyze_axis(x, ax, offs[ax], 1 << j, s, cancel)
            return x

        # <.,h_V> has scale 2^{jd/2 - Nd}; <.>_V has 2^{(j-N)d}
        hb = lin(b.values, lambda x: an(x, True)) * sqrt2_pow(j * d - 2 * N * d, backend)
        terms = []
        for g, ch in zip((g1, g2), pat[:2]):
            if ch == "c":
                terms.append(lin(g.values, lambda x: an(x, True)) * sqrt2_pow(j * d - 2 * N * d, backend))
            else:
                terms.append(lin(g.values, lambda x: an(x, False)) * sqrt2_pow(2 * (j - N) * d, backend))
        c = hb * terms[0] * terms[1]

        def syn(y, cancel):
            for ax in range(d):
                y = synth_axis(y, ax, offs[ax], s, 2 << N, cancel)
            return y

        if pat[2] == "c":
            part = lin(c, lambda y: syn(y, True)) * sqrt2_pow(j * d, backend)
        else:
            part = lin(c, lambda y: syn(y, False)) * sqrt2_pow(2 * j * d, backend)
        out = part if out is None else out + part
    if out is None:
        return GridFunction.zeros(mesh, backend)
    return GridFunction(mesh, out)


# ---------------------------------------------------------------------------
# Model operator specs


def _unit_bound_ok(u) -> bool:
    if isinstance(u, ExactArray):
        one = ExactArray.zeros(u.shape) + 1
        return bool(np.all((one - abs(u)).sign() >= 0))
    return bool(np.all(np.abs(np.asarray(u)) <= 1 + 1e-12))


@dataclass(eq=False)
class _ModelBase:
    n: int
    m: int
    N1: int
    N2: int
    k: tuple = (0, 0, 0)
    v: tuple = (0, 0, 0)
    pattern: CancellationPattern = field(default_factory=CancellationPattern)
    permissive: bool = False
    perm: tuple = (0, 1, 2)

    kind = "base"

    def __post_init__(self):
        self.k = tuple(int(x) for x in self.k)
        self.v = tuple(int(x) for x in self.v)
        if len(self.k) != 3 or len(self.v) != 3 or min(self.k + self.v) < 0:
            raise ValueError("complexities are triples of nonnegative integers")
        self._cache = {}

    # the stored data is for perm = identity; these report the permuted view
    @property
    def eff_pattern(self) -> CancellationPattern:
        return self.pattern.permuted(self.perm)

    @property
    def eff_k(self):
        return tuple(self.k[i] for i in self.perm)

    @property
    def eff_v(self):
        return tuple(self.v[i] for i in self.perm)

    @property
    def complexity(self) -> int:
        return max(self.k + self.v)

    @property
    def backend(self) -> str:
        raise NotImplementedError

    def default_grid(self) -> GridSpec:
        return GridSpec(self.n, self.m, self.N1, self.N2)

    def levels(self):
        r1 = root_levels(self.N1, self.k, self.pattern.p1)
        r2 = root_levels(self.N2, self.v, self.pattern.p2)
        return [(a, b) for a in r1 for b in r2]

    def raw_terms(self, grid: GridSpec, backend: str):
        """Yield (jK, jV, A, scale) in stored slot order."""
        raise NotImplementedError

    def terms(self, grid: GridSpec | None = None, backend: str | None = None):
        grid = grid or self.default_grid()
        backend = backend or self.backend
        key = (grid, backend)
        if key not in self._cache:
            out = []
            p = self.perm
            axes = (0, 1, 2 + p[0], 2 + p[1], 2 + p[2], 5 + p[0], 5 + p[1], 5 + p[2])
            for jK, jV, A, scale in self.raw_terms(grid, backend):
                if p != (0, 1, 2):
                    A = A.transpose(axes)
                out.append((jK, jV, A, scale))
            self._cache[key] = out
        return self._cache[key]

    def _slot(self, i: int):
        pat = self.eff_pattern
        return (self.eff_k[i], self.eff_v[i]), (pat.p1[i] == "c", pat.p2[i] == "c")

    # evaluation
    def apply(self, f1: GridFunction, f2: GridFunction, grid: GridSpec | None = None) -> GridFunction:
        grid = grid or self.default_grid()
        mesh = f1.mesh
        backend = backend_of(f1.values)
        nb = f1.values.ndim - len(mesh.shape) if not isinstance(f1.values, ExactArray) else 0
        (d1, c1), (d2, c2), (d3, c3) = self._slot(0), self._slot(1), self._slot(2)
        sub = "KVabcxyz,...KaVx,...KbVy->...KcVz"
        out = None
        for jK, jV, A, scale in self.terms(grid, backend):
            roots = (jK, jV)
            C1 = lin(f1.values, lambda x: _tree_analyze(x, mesh, grid, nb, roots, d1, c1))
            C2 = lin(f2.values, lambda x: _tree_analyze(x, mesh, grid, nb, roots, d2, c2))
            Y = einsum(sub, A, C1, C2)
            e = _analysis_exp(mesh, roots, d1) + _analysis_exp(mesh, roots, d2) + _synth_exp(mesh, roots, d3)
            part = lin(Y, lambda y: _tree_synth(y, mesh, grid, nb, roots, d3, c3), scale * sqrt2_pow(e, backend))
            out = part if out is None else out + part
        if out is None:
            return GridFunction(mesh, f1.values * 0)
        return GridFunction(mesh, out) if nb == 0 else _Batch(mesh, out)

    __call__ = apply

    def form_by_root(self, f1, f2, f3, grid: GridSpec | None = None) -> dict:
        """Tree-by-tree parts of <S(f1, f2), f3>: {(jK, jV): array over (K, V) window roots}."""
        grid = grid or self.default_grid()
        mesh = f1.mesh
        backend = f1.backend
        slots = [self._slot(i) for i in range(3)]
        out = {}
        for jK, jV, A, scale in self.terms(grid, backend):
            roots = (jK, jV)
            Cs = []
            e = 0
            for f, (dd, cc) in zip((f1, f2, f3), slots):
                Cs.append(lin(f.values, lambda x: _tree_analyze(x, mesh, grid, 0, roots, dd, cc)))
                e += _analysis_exp(mesh, roots, dd)
            val = einsum("KVabcxyz,KaVx,KbVy,KcVz->KV", A, *Cs)
            out[(jK, jV)] = val * (scale * sqrt2_pow(e, backend))
        return out

    def abs_form(self, f1, f2, f3, grid: GridSpec | None = None) -> float:
        """Sum of |a <f1,h><f2,h><f3,h>| over all tuples (float)."""
        grid = grid or self.default_grid()
        mesh = f1.mesh
        slots = [self._slot(i) for i in range(3)]
        total = 0.0
        for jK, jV, A, scale in self.terms(grid, FLOAT):
            roots = (jK, jV)
            Cs = []
            e = 0
            for f, (dd, cc) in zip((f1, f2, f3), slots):
                x = to_float(f.values)
                Cs.append(np.abs(_tree_analyze(x, mesh, grid, 0, roots, dd, cc)))
                e += _analysis_exp(mesh, roots, dd)
            val = np.einsum("KVabcxyz,KaVx,KbVy,KcVz->", np.abs(to_float(A)), *Cs, optimize=True)
            total += float(val) * abs(float(to_float(scale))) * 2.0 ** (e / 2.0)
        return total

    def form(self, f1, f2, f3, grid: GridSpec | None = None):
        """<S(f1, f2), f3> by contracting tree coefficients of all three inputs."""
        total = None
        for val in self.form_by_root(f1, f2, f3, grid).values():
            val = val.sum()
            total = val if total is None else total + val
        if total is None:
            return QSqrt2(0) if f1.backend == EXACT else 0.0
        return total

    def adjoint(self, which: str):
        if which not in ADJOINTS:
            raise ValueError(f"unknown adjoint {which!r}")
        q = ADJOINTS[which]
        new = self._copy()
        new.perm = tuple(self.perm[i] for i in q)
        new._cache = {}
        return new

    def _copy(self):
        import copy
        new = copy.copy(self)
        new._cache = {}
        return new

    def astype(self, backend: str):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"class": self.kind, "pattern": str(self.eff_pattern), "k": list(self.eff_k), "v": list(self.eff_v),
                "dims": [self.n, self.m], "depth": [self.N1, self.N2]}


class _Batch:
    """Batched operator output (float only): values carry leading batch axes."""

    def __init__(self, mesh: Mesh, values: np.ndarray):
        self.mesh = mesh
        self.values = values


def shift_bound(n: int, m: int, jK: int, jV: int, k, v, backend: str = FLOAT):
    """The admissible coefficient bound at root levels (jK, jV)."""
    return sqrt2_pow(n * (jK - sum(k)) + m * (jV - sum(v)), backend)


@dataclass(eq=False)
class ShiftSpec(_ModelBase):
    """Shift of complexity (k, v); tables[(jK, jV)] holds a / bound (entries in [-1, 1])."""

    tables: dict = field(default_factory=dict)
    kind = SHIFT

    def __post_init__(self):
        super().__post_init__()
        validate_pattern(SHIFT, self.pattern, permissive=self.permissive)
        valid = set(self.levels())
        if not valid and self.tables:
            raise ValueError("complexity does not fit the depth")
        for key, u in self.tables.items():
            if key not in valid:
                raise ValueError(f"root levels {key} do not fit the depth")
            jK, jV = key
            want = self.table_shape(jK, jV)
            if tuple(u.shape) != want:
                raise ValueError(f"table {key} has shape {u.shape}, expected {want}")
            if not _unit_bound_ok(u):
                raise AdmissibilityError(f"coefficient exceeds the admissible bound at root levels {key}")

    def table_shape(self, jK: int, jV: int):
        n, m = self.n, self.m
        return ((1 << (n * jK)), (1 << (m * jV))) + tuple(1 << (n * x) for x in self.k) + tuple(1 << (m * x) for x in self.v)

    @property
    def backend(self) -> str:
        for u in self.tables.values():
            return backend_of(u)
        return FLOAT

    def raw_terms(self, grid, backend):
        for (jK, jV), u in sorted(self.tables.items()):
            yield jK, jV, convert(u, backend), shift_bound(self.n, self.m, jK, jV, self.k, self.v, backend)

    def coefficient(self, jK, jV, idx):
        """The actual coefficient a at a table index."""
        u = self.tables[(jK, jV)]
        b = shift_bound(self.n, self.m, jK, jV, self.k, self.v, backend_of(u))
        return u[idx] * b

    def astype(self, backend: str) -> "ShiftSpec":
        new = self._copy()
        new.tables = {key: convert(u, backend) for key, u in self.tables.items()}
        return new


@dataclass(eq=False)
class PartialParaproductSpec(_ModelBase):
    """Shift structure in one parameter, a bilinear paraproduct in the other (para_param).

    symbols[jK] has shape (nK, nI1, nI2, nI3) + one-parameter mesh shape and holds
    b_{K,I1,I2,I3} / bound; the stored symbols have dyadic BMO at most 1.
    """

    symbols: dict = field(default_factory=dict)
    para_param: int = 2
    kind = PARTIAL

    def __post_init__(self):
        super().__post_init__()
        if self.para_param not in (1, 2):
            raise ValueError("para_param must be 1 or 2")
        if self.para_param == 2:
            self.v = (0, 0, 0)
        else:
            self.k = (0, 0, 0)
        validate_pattern(PARTIAL, self.pattern, self.para_param, self.permissive)
        from .spaces import one_param_bmo_shifted
        for jK, sym in self.symbols.items():
            bm = one_param_bmo_shifted(to_float(sym), self.other_mesh)
            if bm > 1 + 1e-9:
                raise AdmissibilityError(f"symbol BMO {bm:.4g} exceeds the admissible bound at root level {jK}")

    @property
    def shift_param(self) -> int:
        return 1 if self.para_param == 2 else 2

    @property
    def other_mesh(self) -> Mesh:
        return Mesh(self.n, self.m, self.N1, self.N2).part(self.para_param)

    @property
    def shift_k(self):
        return self.k if self.shift_param == 1 else self.v

    @property
    def backend(self) -> str:
        for s in self.symbols.values():
            return backend_of(s)
        return FLOAT

    def shift_levels(self):
        N = self.N1 if self.shift_param == 1 else self.N2
        return root_levels(N, self.shift_k, self.pattern.param(self.shift_param))

    def raw_terms(self, grid, backend):
        sp, pp = self.shift_param, self.para_param
        ds, dp = (self.n, self.m) if sp == 1 else (self.m, self.n)
        Np = self.N2 if pp == 2 else self.N1
        ks = self.shift_k
        for jS, sym in sorted(self.symbols.items()):
            sym = convert(sym, backend)
            lead = sym.shape[:4]
            flat = sym.reshape((-1,) + tuple(sym.shape[4:]))
            bound = sqrt2_pow(ds * (jS - sum(ks)), backend)
            for jP in range(Np):
                offs = grid.shift_cells(pp, jP)
                s = 1 << (Np - jP)

                def an(x):
                    for ax in reversed(range(dp)):
                        x = analyze_axis(x, 1 + ax, offs[ax], 1 << jP, s, True)
                    return x.reshape((x.shape[0], -1))

                lam = lin(flat, an)  # raw <b, h_P>, shape (tuples, nP)
                nP = lam.shape[1]
                lam = lam.reshape(lead + (nP,))
                # the two '0' slots carry 1_P/|P| = |P|^{-1/2} h^0_P
                scale = bound * sqrt2_pow(jP * dp - 2 * Np * dp, backend) * sqrt2_pow(2 * jP * dp, backend)
                if pp == 2:
                    A = lam.transpose((0, 4, 1, 2, 3)).reshape((lead[0], nP) + lead[1:] + (1, 1, 1))
                else:
                    A = lam.transpose((4, 0, 1, 2, 3)).reshape((nP, lead[0], 1, 1, 1) + lead[1:])
                jK, jV = (jS, jP) if pp == 2 else (jP, jS)
                yield jK, jV, A, scale

    def astype(self, backend: str) -> "PartialParaproductSpec":
        new = self._copy()
        new.symbols = {key: convert(s, backend) for key, s in self.symbols.items()}
        return new


@dataclass(eq=False)
class FullParaproductSpec(_ModelBase):
    """Full paraproduct with lambda_{K,V} = <b, h_K (x) h_V> at every slot placement."""

    b: GridFunction | None = None
    kind = FULL

    def __post_init__(self):
        super().__post_init__()
        self.k = (0, 0, 0)
        self.v = (0, 0, 0)
        validate_pattern(FULL, self.pattern, permissive=self.permissive)
        if self.b is None:
            self.b = GridFunction.zeros(Mesh(self.n, self.m, self.N1, self.N2))

    @property
    def backend(self) -> str:
        return self.b.backend

    def raw_terms(self, grid, backend):
        b = self.b.astype(backend)
        for jK, jV in self.levels():
            lam = tree_coefficients(b, grid, (jK, jV), (0, 0), (True, True))
            nK, nV = lam.shape[0], lam.shape[2]
            A = lam.reshape((nK, 1, nV, 1)).transpose((0, 2, 1, 3)).reshape((nK, nV) + (1,) * 6)
            yield jK, jV, A, sqrt2_pow(2 * (jK * self.n + jV * self.m), backend)

    def astype(self, backend: str) -> "FullParaproductSpec":
        new = self._copy()
        new.b = self.b.astype(backend)
        return new


def partial_adjoint(spec: _ModelBase, which: str) -> _ModelBase:
    """S^{1*} (slots 1 and 3 swapped) or S^{2*} (slots 2 and 3 swapped)."""
    if not isinstance(spec, _ModelBase):
        raise TypeError("partial adjoints are defined for model operator specs")
    return spec.adjoint(which)


# ---------------------------------------------------------------------------
# Random admissible specs


def _rational(x: float, bits: int = 20) -> Fraction:
    """Largest multiple of 2^-bits not exceeding x (x >= 0)."""
    return Fraction(math.floor(x * (1 << bits)), 1 << bits)


def _sat_fraction(saturation) -> Fraction:
    s = Fraction(saturation).limit_denominator(1 << 20) if not isinstance(saturation, Fraction) else saturation
    if s < 0 or s > 1:
        raise ValueError("saturation must lie in [0, 1]")
    return s


def _to_backend_rational(ints: np.ndarray, den: int, backend: str):
    if backend == EXACT:
        return ExactArray(ints.astype(object), None, den)
    return ints.astype(np.float64) / den


def random_unit_table(rng: np.random.Generator, shape, saturation, sparsity: float, backend: str,
                      magnitude: str = "saturated"):
    sat = _sat_fraction(saturation)
    mask = rng.random(shape) < sparsity
    if magnitude == "saturated":
        signs = rng.choice(np.array([-1, 1]), size=shape)
        ints = signs * mask * sat.numerator
        den = sat.denominator
    else:
        q = 1 << 12
        raw = rng.integers(-q, q + 1, size=shape)
        ints = raw * mask * sat.numerator
        den = sat.denominator * q
    return _to_backend_rational(np.asarray(ints, dtype=np.int64), den, backend)


def random_one_param_symbols(rng, lead, mesh: Mesh, saturation, backend: str):
    """Random one-parameter functions on [0,1)^d, each scaled to BMO <= saturation."""
    from .spaces import one_param_bmo_shifted
    sat = float(_sat_fraction(saturation))
    N = mesh.N1 if mesh.m == 0 else mesh.N2
    d = mesh.n if mesh.m == 0 else mesh.m
    count = int(np.prod(lead))
    out = np.zeros((count,) + mesh.shape, dtype=np.int64)
    unit = (slice(0, 1 << N),) * d
    q = 1 << 8
    dens = []
    nums = []
    for t in range(count):
        vals = rng.integers(-q, q + 1, size=(1 << N,) * d)
        arr = np.zeros(mesh.shape, dtype=np.int64)
        arr[unit] = vals
        bm = one_param_bmo_shifted(arr.astype(np.float64), mesh)
        c = _rational(sat / bm if bm > 0 else 0.0)
        nums.append(arr)
        dens.append(c)
    den = 1 << 20
    for t, (arr, c) in enumerate(zip(nums, dens)):
        out[t] = arr * int(c * den)
    sym = _to_backend_rational(out, den, backend)
    return sym.reshape(tuple(lead) + mesh.shape)


def random_admissible_spec(rng, kind: str = SHIFT, k=(0, 0, 0), v=(0, 0, 0), pattern=None,
                           saturation=1, sparsity: float = 1.0, n: int = 1, m: int = 1, N1: int = 3, N2: int = 3,
                           backend: str = EXACT, para_param: int = 2, b: GridFunction | None = None,
                           magnitude: str = "saturated", permissive: bool = False):
    """A random admissible model operator; deterministic per seed."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if pattern is None:
        pattern = all_patterns(kind)[-1] if kind != PARTIAL else CancellationPattern("cc0", "00c")
    if isinstance(pattern, str):
        pattern = CancellationPattern.parse(pattern)
    if kind == SHIFT:
        proto = ShiftSpec(n, m, N1, N2, k, v, pattern, permissive)
        if not proto.levels():
            raise ValueError("complexity does not fit the depth")
        tables = {}
        for jK, jV in proto.levels():
            tables[(jK, jV)] = random_unit_table(rng, proto.table_shape(jK, jV), saturation, sparsity, backend, magnitude)
        return ShiftSpec(n, m, N1, N2, k, v, pattern, permissive, tables=tables)
    if kind == PARTIAL:
        proto = PartialParaproductSpec(n, m, N1, N2, k, v, pattern, permissive, para_param=para_param)
        symbols = {}
        ds = n if proto.shift_param == 1 else m
        for jS in proto.shift_levels():
            lead = (1 << (ds * jS),) + tuple(1 << (ds * x) for x in proto.shift_k)
            sym = random_one_param_symbols(rng, lead, proto.other_mesh, saturation, backend)
            mask = rng.random(lead) < sparsity
            symbols[jS] = _mask(sym, mask)
        return PartialParaproductSpec(n, m, N1, N2, k, v, pattern, permissive, symbols=symbols, para_param=para_param)
    if kind == FULL:
        mesh = Mesh(n, m, N1, N2)
        if b is None:
            b = random_product_symbol(rng, mesh, backend)
        return FullParaproductSpec(n, m, N1, N2, (0, 0, 0), (0, 0, 0), pattern, permissive, b=b.astype(backend))
    raise ValueError(f"unknown operator class {kind!r}")


def _mask(sym, mask: np.ndarray):
    shp = mask.shape + (1,) * (sym.ndim - mask.ndim)
    mk = np.broadcast_to(mask.reshape(shp), sym.shape)
    if not isinstance(sym, ExactArray):
        return np.where(mk, sym, 0.0)
    a = np.where(mk, sym.a, 0).astype(object)
    b = None if sym.b is None else np.where(mk, sym.b, 0).astype(object)
    return ExactArray(a, b, sym.den)


def random_product_symbol(rng, mesh: Mesh, backend: str = EXACT) -> GridFunction:
    """Random b on [0,1)^(n+m) scaled to product BMO (lower bound) equal to at most one."""
    from .spaces import product_bmo
    q = 1 << 8
    unit = (slice(0, 1 << mesh.N1),) * mesh.n + (slice(0, 1 << mesh.N2),) * mesh.m
    arr = np.zeros(mesh.shape, dtype=np.int64)
    arr[unit] = rng.integers(-q, q + 1, size=arr[unit].shape)
    pb = product_bmo(GridFunction(mesh, arr.astype(np.float64)))
    c = _rational(1.0 / pb) if pb > 0 else Fraction(0)
    ints = arr * c.numerator
    return GridFunction(mesh, _to_backend_rational(ints, c.denominator, backend))


# ---------------------------------------------------------------------------
# Independent triple-sum oracle


def form_oracle(spec: _ModelBase, f1: GridFunction, f2: GridFunction, f3: GridFunction,
                grid: GridSpec | None = None):
    """<S(f1,f2),f3> by enumerating cubes and pairing each Haar tensor separately (slow)."""
    grid = grid or spec.default_grid()
    mesh = f1.mesh
    backend = f1.backend
    pat = spec.eff_pattern
    ks, vs = spec.eff_k, spec.eff_v
    total = QSqrt2(0) if backend == EXACT else 0.0
    cache = {}

    def pairing(slot, f, I, J):
        key = (slot, I, J)
        if key not in cache:
            h1 = HaarSymbol.cancel(I) if pat.p1[slot] == "c" else HaarSymbol.noncancel(I)
            h2 = HaarSymbol.cancel(J) if pat.p2[slot] == "c" else HaarSymbol.noncancel(J)
            cache[key] = haar_pairing(f, h1, h2)
        return cache[key]

    def index_in_tree(Q: Cube, root: Cube) -> int:
        """Flattened descendant index (row-major over axes) of Q below root."""
        k = Q.level - root.level
        idx = 0
        for (a, _), (r, _) in zip(Q.cell_range(), root.cell_range()):
            s = 1 << (grid.depth(Q.param) - Q.level)
            idx = idx * (1 << k) + (a - r) // s
        return idx

    def desc(Q: Cube, k: int):
        out = [Q]
        for _ in range(k):
            out = [c for P in out for c in P.children()]
        return out

    for jK, jV, A, scale in spec.terms(grid, backend):
        Ks = list(grid.cubes(1, jK, unit_only=True))
        Vs = list(grid.cubes(2, jV, unit_only=True))
        for iK, K in enumerate(Ks):
            I_lists = [desc(K, ks[s]) for s in range(3)]
            for iV, V in enumerate(Vs):
                J_lists = [desc(V, vs[s]) for s in range(3)]
                for I1, I2, I3 in product(*I_lists):
                    for J1, J2, J3 in product(*J_lists):
                        a = A[(iK, iV, index_in_tree(I1, K), index_in_tree(I2, K), index_in_tree(I3, K),
                               index_in_tree(J1, V), index_in_tree(J2, V), index_in_tree(J3, V))]
                        if (backend == EXACT and not a) or (backend == FLOAT and a == 0):
                            continue
                        p = pairing(0, f1, I1, J1) * pairing(1, f2, I2, J2) * pairing(2, f3, I3, J3)
                        total = total + a * scale * p
    return total


def unit_cube_order_check(grid: GridSpec, param: int, level: int) -> bool:
    """Window enumeration order matches row-major positions (used by the oracle)."""
    cubes = list(grid.cubes(param, level, unit_only=True))
    return len(cubes) == 1 << (grid.dim(param) * level)


# ---------------------------------------------------------------------------
# Serialization


def _fmt(x, backend: str) -> str:
    if backend == EXACT:
        a, b = QSqrt2.coerce(x).to_strings()
        return f"{a} {b}"
    return float(x).hex()


def _parse(tokens, backend: str):
    if backend == EXACT:
        return QSqrt2.from_strings(tokens[0], tokens[1])
    return float.fromhex(tokens[0])


def dumps_spec(spec: _ModelBase) -> str:
    """Text form; coefficient entries are keyed by root levels and tree coordinates."""
    buf = io.StringIO()
    backend = spec.backend
    buf.write(f"MODELSPEC {spec.kind}\n")
    buf.write(f"dims {spec.n} {spec.m} {spec.N1} {spec.N2}\n")
    buf.write(f"backend {backend}\n")
    buf.write("k " + " ".join(map(str, spec.k)) + "\n")
    buf.write("v " + " ".join(map(str, spec.v)) + "\n")
    buf.write(f"pattern {spec.pattern.p1} {spec.pattern.p2}\n")
    buf.write("perm " + " ".join(map(str, spec.perm)) + "\n")
    buf.write(f"permissive {int(spec.permissive)}\n")
    if isinstance(spec, ShiftSpec):
        for (jK, jV), u in sorted(spec.tables.items()):
            bound = shift_bound(spec.n, spec.m, jK, jV, spec.k, spec.v, backend)
            shape = u.shape
            for idx in np.ndindex(*shape):
                val = u[idx]
                if (backend == EXACT and not val) or (backend == FLOAT and val == 0):
                    continue
                buf.write(f"entry {jK} {jV} " + " ".join(map(str, idx)) + " " + _fmt(val * bound, backend) + "\n")
    elif isinstance(spec, PartialParaproductSpec):
        buf.write(f"para_param {spec.para_param}\n")
        for jS, sym in sorted(spec.symbols.items()):
            lead = sym.shape[:4]
            for idx in np.ndindex(*lead):
                vals = sym[idx]
                flat = vals.ravel() if backend == FLOAT else vals.ravel().to_scalars()
                buf.write(f"symbol {jS} " + " ".join(map(str, idx)) + " "
                          + " ".join(_fmt(x, backend).replace(" ", ",") for x in flat) + "\n")
    else:
        vals = spec.b.values
        flat = np.asarray(vals).ravel() if backend == FLOAT else vals.ravel().to_scalars()
        buf.write("b " + " ".join(_fmt(x, backend).replace(" ", ",") for x in flat) + "\n")
    return buf.getvalue()


def loads_spec(text: str) -> _ModelBase:
    lines = [ln.split() for ln in text.strip().splitlines()]
    if lines[0][0] != "MODELSPEC":
        raise ValueError("not a serialized model spec")
    kind = lines[0][1]
    hdr = {ln[0]: ln[1:] for ln in lines[1:] if ln[0] not in ("entry", "symbol")}
    n, m, N1, N2 = (int(x) for x in hdr["dims"])
    backend = hdr["backend"][0]
    k = tuple(int(x) for x in hdr["k"])
    v = tuple(int(x) for x in hdr["v"])
    pattern = CancellationPattern(*hdr["pattern"])
    perm = tuple(int(x) for x in hdr["perm"])
    permissive = bool(int(hdr.get("permissive", ["0"])[0]))
    if kind == SHIFT:
        proto = ShiftSpec(n, m, N1, N2, k, v, pattern, permissive)
        tables = {key: _zeros(proto.table_shape(*key), backend) for key in proto.levels()}
        for ln in lines[1:]:
            if ln[0] != "entry":
                continue
            jK, jV = int(ln[1]), int(ln[2])
            idx = tuple(int(x) for x in ln[3:11])
            a = _parse(ln[11:], backend)
            if (jK, jV) not in tables:
                raise ValueError(f"root levels {(jK, jV)} do not fit the depth")
            bound = shift_bound(n, m, jK, jV, k, v, backend)
            tables[(jK, jV)][idx] = a / bound
        spec = ShiftSpec(n, m, N1, N2, k, v, pattern, permissive, tables=tables)
    elif kind == PARTIAL:
        pp = int(hdr["para_param"][0])
        proto = PartialParaproductSpec(n, m, N1, N2, k, v, pattern, permissive, para_param=pp)
        mesh_o = proto.other_mesh
        ds = n if proto.shift_param == 1 else m
        symbols = {}
        for jS in proto.shift_levels():
            lead = (1 << (ds * jS),) + tuple(1 << (ds * x) for x in proto.shift_k)
            symbols[jS] = _zeros(lead + mesh_o.shape, backend)
        for ln in lines[1:]:
            if ln[0] != "symbol":
                continue
            jS = int(ln[1])
            idx = tuple(int(x) for x in ln[2:6])
            vals = [_parse(tok.split(","), backend) for tok in ln[6:]]
            arr = _from_list(vals, mesh_o.shape, backend)
            symbols[jS][idx] = arr
        spec = PartialParaproductSpec(n, m, N1, N2, k, v, pattern, permissive, symbols=symbols, para_param=pp)
    elif kind == FULL:
        mesh = Mesh(n, m, N1, N2)
        vals = [_parse(tok.split(","), backend) for tok in hdr["b"]]
        spec = FullParaproductSpec(n, m, N1, N2, k, v, pattern, permissive,
                                   b=GridFunction(mesh, _from_list(vals, mesh.shape, backend)))
    else:
        raise ValueError(f"unknown operator class {kind!r}")
    spec.perm = perm
    return spec


def _zeros(shape, backend):
    return ExactArray.zeros(shape) if backend == EXACT else np.zeros(shape)


def _from_list(vals, shape, backend):
    if backend == EXACT:
        return ExactArray.from_scalars(np.array(vals, dtype=object).reshape(shape))
    return np.array(vals, dtype=np.float64).reshape(shape)
