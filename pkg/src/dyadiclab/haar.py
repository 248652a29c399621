"""Piecewise-constant functions on the cell mesh, Haar pairings and martingale operators.

All linear operators are written as integer-linear maps on raw arrays
followed by one scale factor, so the same code serves float arrays and
``ExactArray`` values.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Callable

import numpy as np

from .geometry import Cube, GridSpec, Rectangle, standard_grid
from .scalar import (EXACT, FLOAT, ExactArray, QSqrt2, backend_of, convert, dyadic,
                     sqrt2_pow, to_float)


@dataclass(frozen=True)
class Mesh:
    """Finest standard cells of [0,2)^n x [0,2)^m; n or m may be 0 for one-parameter data."""

    n: int
    m: int
    N1: int
    N2: int

    @property
    def shape(self) -> tuple[int, ...]:
        return (2 << self.N1,) * self.n + (2 << self.N2,) * self.m

    @property
    def log_cell(self) -> int:
        """-log2 of the cell measure."""
        return self.n * self.N1 + self.m * self.N2

    def axes(self, param: int) -> tuple[int, ...]:
        return tuple(range(self.n)) if param == 1 else tuple(range(self.n, self.n + self.m))

    def depth(self, param: int) -> int:
        return self.N1 if param == 1 else self.N2

    def dim(self, param: int) -> int:
        return self.n if param == 1 else self.m

    def part(self, param: int) -> "Mesh":
        """Mesh of a single parameter."""
        return Mesh(self.n, 0, self.N1, 0) if param == 1 else Mesh(0, self.m, 0, self.N2)

    @classmethod
    def of(cls, grid: GridSpec) -> "Mesh":
        return cls(grid.n, grid.m, grid.N1, grid.N2)


def lin(X, fn: Callable[[np.ndarray], np.ndarray], scale=None):
    """Apply an integer-linear raw-array map, then an optional scalar factor."""
    if isinstance(X, ExactArray):
        out = ExactArray(fn(X.a), None if X.b is None else fn(X.b), X.den)
    else:
        out = fn(np.asarray(X))
    if scale is not None:
        out = out * (float(scale) if not isinstance(out, ExactArray) else scale)
    return out


def _zeros_like_raw(x: np.ndarray, shape) -> np.ndarray:
    return np.zeros(shape, dtype=x.dtype)


# ---------------------------------------------------------------------------
# GridFunction


@dataclass(eq=False)
class GridFunction:
    mesh: Mesh
    values: object
    support_hint: Rectangle | None = None

    def __post_init__(self):
        if tuple(self.values.shape) != self.mesh.shape:
            raise ValueError(f"values shape {self.values.shape} does not match mesh {self.mesh.shape}")

    @property
    def backend(self) -> str:
        return backend_of(self.values)

    # constructors
    @classmethod
    def zeros(cls, mesh: Mesh, backend: str = FLOAT) -> "GridFunction":
        if backend == EXACT:
            return cls(mesh, ExactArray.zeros(mesh.shape))
        return cls(mesh, np.zeros(mesh.shape))

    @classmethod
    def constant(cls, mesh: Mesh, c, backend: str = FLOAT) -> "GridFunction":
        g = cls.zeros(mesh, backend)
        return GridFunction(mesh, g.values + c)

    @classmethod
    def from_array(cls, mesh: Mesh, arr, backend: str | None = None) -> "GridFunction":
        if backend is None:
            backend = backend_of(arr)
        return cls(mesh, convert(arr, backend))

    def astype(self, backend: str) -> "GridFunction":
        if backend == self.backend:
            return self
        return GridFunction(self.mesh, convert(self.values, backend))

    def to_float(self) -> "GridFunction":
        return self.astype(FLOAT)

    def to_exact(self) -> "GridFunction":
        return self.astype(EXACT)

    # arithmetic
    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.mesh != self.mesh:
                raise ValueError("mesh mismatch")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.mesh, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.mesh, self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self.mesh, -self.values + self._other(other))

    def __neg__(self):
        return GridFunction(self.mesh, -self.values)

    def __mul__(self, other):
        return GridFunction(self.mesh, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return GridFunction(self.mesh, self.values / c)

    def integral(self):
        s = self.values.sum()
        return s * dyadic(1, self.mesh.log_cell, self.backend)

    def inner(self, other: "GridFunction"):
        return (self * other).integral()

    def is_zero(self) -> bool:
        from .scalar import is_zero
        return is_zero(self.values)

    def float_values(self) -> np.ndarray:
        return to_float(self.values)


def tensor(g1: GridFunction, g2: GridFunction) -> GridFunction:
    """g1 (parameter 1 only) times g2 (parameter 2 only)."""
    if g1.mesh.m or g2.mesh.n:
        raise ValueError("tensor needs a parameter-1 and a parameter-2 function")
    mesh = Mesh(g1.mesh.n, g2.mesh.m, g1.mesh.N1, g2.mesh.N2)
    a = g1.values.reshape(g1.mesh.shape + (1,) * g2.mesh.m)
    b = g2.values.reshape((1,) * g1.mesh.n + g2.mesh.shape)
    if isinstance(a, ExactArray) or isinstance(b, ExactArray):
        shape = mesh.shape
        a = convert(a, EXACT).broadcast_to(shape)
        b = convert(b, EXACT).broadcast_to(shape)
    return GridFunction(mesh, a * b)


def indicator(mesh: Mesh, cells, backend: str = FLOAT) -> GridFunction:
    arr = np.zeros(mesh.shape, dtype=np.int64)
    arr[cells] = 1
    return GridFunction(mesh, convert(arr, backend) if backend == EXACT else arr.astype(np.float64))


# ---------------------------------------------------------------------------
# Raw axis helpers (integer-linear)


def _slice_axis(x: np.ndarray, axis: int, lo: int, hi: int) -> np.ndarray:
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(lo, hi)
    return x[tuple(idx)]


def analyze_axis(x: np.ndarray, axis: int, start: int, count: int, s: int, cancel: bool) -> np.ndarray:
    """Per-cube sums (or left-minus-right half sums) of `count` consecutive blocks of `s` cells."""
    sl = _slice_axis(x, axis, start, start + count * s)
    sh = sl.shape
    if cancel:
        r = sl.reshape(sh[:axis] + (count, 2, s // 2) + sh[axis + 1:]).sum(axis=axis + 2)
        return r.take(0, axis=axis + 1) - r.take(1, axis=axis + 1)
    return sl.reshape(sh[:axis] + (count, s) + sh[axis + 1:]).sum(axis=axis + 1)


def synth_axis(c: np.ndarray, axis: int, start: int, s: int, total: int, cancel: bool) -> np.ndarray:
    """Transpose of analyze_axis: spread per-cube values over cells (sign pattern if cancel)."""
    count = c.shape[axis]
    if cancel:
        pat = np.array([1, -1], dtype=np.int64)
        sh = [1] * (c.ndim + 1)
        sh[axis + 1] = 2
        e = np.expand_dims(c, axis + 1) * pat.reshape(sh)
        e = e.reshape(c.shape[:axis] + (2 * count,) + c.shape[axis + 1:])
        e = np.repeat(e, s // 2, axis=axis)
    else:
        e = np.repeat(c, s, axis=axis)
    shape = list(c.shape)
    shape[axis] = total
    out = _zeros_like_raw(e, tuple(shape))
    idx = [slice(None)] * c.ndim
    idx[axis] = slice(start, start + count * s)
    out[tuple(idx)] = e
    return out


def block_mean_raw(x: np.ndarray, axis: int, start: int, count: int, s: int) -> np.ndarray:
    """Block sums spread back over their blocks (mean up to the factor s); zero elsewhere."""
    return synth_axis(analyze_axis(x, axis, start, count, s, False), axis, start, s, x.shape[axis], False)


def restrict_raw(x: np.ndarray, axis: int, lo: int, hi: int) -> np.ndarray:
    out = _zeros_like_raw(x, x.shape)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(lo, hi)
    out[tuple(idx)] = x[tuple(idx)]
    return out


# ---------------------------------------------------------------------------
# Haar symbols and pairings


@dataclass(frozen=True)
class HaarSymbol:
    cube: Cube
    eta: tuple[int, ...]

    def __post_init__(self):
        if len(self.eta) != self.cube.dim or any(e not in (0, 1) for e in self.eta):
            raise ValueError("signature must be a 0/1 vector of the cube dimension")
        if self.cancellative and self.cube.level >= self.cube.grid.depth(self.cube.param):
            raise ValueError("cancellative Haar functions need level below the depth")

    @property
    def cancellative(self) -> bool:
        return any(self.eta)

    @classmethod
    def cancel(cls, cube: Cube) -> "HaarSymbol":
        return cls(cube, (1,) * cube.dim)

    @classmethod
    def noncancel(cls, cube: Cube) -> "HaarSymbol":
        return cls(cube, (0,) * cube.dim)


def signatures(d: int, cancellative: bool = True) -> list[tuple[int, ...]]:
    return [e for e in product((0, 1), repeat=d) if any(e) or not cancellative]


def _pair_raw(x: np.ndarray, axes: tuple[int, ...], hs: HaarSymbol) -> np.ndarray:
    ranges = hs.cube.cell_range()
    for ax, (lo, hi), e in sorted(zip(axes, ranges, hs.eta), reverse=True):
        x = analyze_axis(x, ax, lo, 1, hi - lo, bool(e)).take(0, axis=ax)
    return x


def _pair_scale(hs: HaarSymbol, backend: str):
    d = hs.cube.dim
    N = hs.cube.grid.depth(hs.cube.param)
    return sqrt2_pow(hs.cube.level * d - 2 * N * d, backend)


def partial_pairing(f: GridFunction, param: int, hs: HaarSymbol) -> GridFunction:
    """<f, h>_param as a function of the other parameter."""
    if hs.cube.param != param:
        raise ValueError("symbol belongs to the other parameter")
    axes = f.mesh.axes(param)
    out = lin(f.values, lambda x: _pair_raw(x, axes, hs), _pair_scale(hs, f.backend))
    return GridFunction(f.mesh.part(2 if param == 1 else 1), out)


def haar_pairing(f: GridFunction, hs1: HaarSymbol, hs2: HaarSymbol):
    axes = f.mesh.axes(1) + f.mesh.axes(2)

    def fn(x):
        x = _pair_raw(x, f.mesh.axes(2), hs2)
        return _pair_raw(x, f.mesh.axes(1), hs1)

    scale = _pair_scale(hs1, f.backend) * _pair_scale(hs2, f.backend)
    out = lin(f.values, fn, scale)
    return out.item() if isinstance(out, ExactArray) else float(out)


def one_param_pairing(g: GridFunction, hs: HaarSymbol):
    """Pairing of a one-parameter function with a Haar function."""
    param = 1 if g.mesh.m == 0 else 2
    out = lin(g.values, lambda x: _pair_raw(x, tuple(range(g.values.ndim)), hs), _pair_scale(hs, g.backend))
    return out.item() if isinstance(out, ExactArray) else float(out)


def haar_function(mesh: Mesh, hs: HaarSymbol, backend: str = FLOAT) -> GridFunction:
    """The one-parameter function h_Q^eta on mesh.part(param)."""
    param = hs.cube.param
    part = mesh.part(param)
    d = hs.cube.dim
    x = np.ones((1,) * d, dtype=np.int64)
    ranges = hs.cube.cell_range()
    N = mesh.depth(param)
    for ax, (lo, hi), e in zip(range(d), ranges, hs.eta):
        x = synth_axis(x, ax, lo, hi - lo, 2 << N, bool(e))
    vals = convert(x, backend) if backend == EXACT else x.astype(np.float64)
    return GridFunction(part, vals * sqrt2_pow(hs.cube.level * d, backend))


def haar_tensor(mesh: Mesh, hs1: HaarSymbol, hs2: HaarSymbol, backend: str = FLOAT) -> GridFunction:
    return tensor(haar_function(mesh, hs1, backend), haar_function(mesh, hs2, backend))


# ---------------------------------------------------------------------------
# Averages and martingale differences


def _cube_mean(values, mesh: Mesh, cube: Cube):
    """<f>_Q 1_Q in the parameter of Q (a function of all variables)."""
    axes = mesh.axes(cube.param)
    ranges = cube.cell_range()

    def fn(x):
        for ax, (lo, hi) in zip(axes, ranges):
            x = block_mean_raw(x, ax, lo, 1, hi - lo)
        return x

    N = mesh.depth(cube.param)
    d = cube.dim
    return lin(values, fn, dyadic(1, (N - cube.level) * d, backend_of(values)))


def _cube_delta(values, mesh: Mesh, cube: Cube):
    out = -_cube_mean(values, mesh, cube)
    for ch in cube.children():
        out = out + _cube_mean(values, mesh, ch)
    return out


def martingale(f: GridFunction, kind: str, cubes) -> GridFunction:
    """Single-cube operators: kind in D1, D2, D12, E1, E2, E12 (Delta / E variants)."""
    cubes = tuple(cubes) if isinstance(cubes, (tuple, list)) else (cubes,)
    v = f.values
    if kind == "E1":
        out = _cube_mean(v, f.mesh, cubes[0])
    elif kind == "E2":
        out = _cube_mean(v, f.mesh, cubes[-1])
    elif kind == "D1":
        out = _cube_delta(v, f.mesh, cubes[0])
    elif kind == "D2":
        out = _cube_delta(v, f.mesh, cubes[-1])
    elif kind == "D12":
        out = _cube_delta(_cube_delta(v, f.mesh, cubes[1]), f.mesh, cubes[0])
    elif kind == "E12":
        out = _cube_mean(_cube_mean(v, f.mesh, cubes[1]), f.mesh, cubes[0])
    else:
        raise ValueError(f"unknown martingale kind {kind!r}")
    return GridFunction(f.mesh, out)


def average(f: GridFunction, R: Rectangle):
    """<f>_R."""
    s = lin(f.values, lambda x: x[R.slices()].sum(), None)
    if isinstance(s, ExactArray):
        s = s.item()
    cells = 1
    for a, b in R.first.cell_range() + R.second.cell_range():
        cells *= b - a
    return s * (Fraction(1, cells) if f.backend == EXACT else 1.0 / cells)


def partial_average(f: GridFunction, cube: Cube) -> GridFunction:
    """<f>_{Q,param} as a function of the other parameter."""
    axes = f.mesh.axes(cube.param)
    ranges = cube.cell_range()

    def fn(x):
        for ax, (lo, hi) in sorted(zip(axes, ranges), reverse=True):
            x = _slice_axis(x, ax, lo, hi).sum(axis=ax)
        return x

    N = f.mesh.depth(cube.param)
    out = lin(f.values, fn, dyadic(1, (N - cube.level) * cube.dim, f.backend))
    return GridFunction(f.mesh.part(2 if cube.param == 1 else 1), out)


# ---------------------------------------------------------------------------
# Level projections over a whole (possibly shifted) grid


class Levels:
    """E_j and Delta_j over all cubes of a level of one parameter of a grid.

    Cubes of level j with nonnegative position inside the box are used; the
    level-j difference lives on the region covered by level-j cubes.
    """

    def __init__(self, grid: GridSpec, param: int, mesh: Mesh | None = None):
        self.grid = grid
        self.param = param
        self.mesh = mesh or Mesh.of(grid)
        self.axes = self.mesh.axes(param)
        self.N = grid.depth(param)
        self.d = grid.dim(param)

    def region(self, j: int) -> list[tuple[int, int]]:
        s = 1 << (self.N - j)
        return [(o, o + c * s) for o, c in zip(self.grid.shift_cells(self.param, j), self.grid.count(self.param, j))]

    def E(self, values, j: int):
        s = 1 << (self.N - j)
        offs = self.grid.shift_cells(self.param, j)
        cnts = self.grid.count(self.param, j)

        def fn(x):
            for ax, o, c in zip(self.axes, offs, cnts):
                x = block_mean_raw(x, ax, o, c, s)
            return x

        return lin(values, fn, dyadic(1, (self.N - j) * self.d, backend_of(values)))

    def restrict(self, values, j: int):
        reg = self.region(j)

        def fn(x):
            for ax, (lo, hi) in zip(self.axes, reg):
                x = restrict_raw(x, ax, lo, hi)
            return x

        return lin(values, fn)

    def D(self, values, j: int):
        if j >= self.N:
            raise ValueError("no martingale difference at the finest level")
        return self.restrict(self.E(values, j + 1), j) - self.E(values, j)


def level_ops(grid: GridSpec, mesh: Mesh | None = None) -> tuple[Levels, Levels]:
    return Levels(grid, 1, mesh), Levels(grid, 2, mesh)


def martingale_block(f: GridFunction, K: Cube, i: int, V: Cube, j: int) -> GridFunction:
    """Sum of Delta_{I x J} f over I^(i) = K, J^(j) = V."""
    grid = K.grid
    if K.level + i >= grid.N1 or V.level + j >= grid.N2:
        raise ValueError("block depth exceeds the grid depth")
    L1, L2 = level_ops(grid, f.mesh)
    v = L1.D(L2.D(f.values, V.level + j), K.level + i)
    sl = Rectangle(K, V).slices()

    def fn(x):
        out = _zeros_like_raw(x, x.shape)
        out[sl] = x[sl]
        return out

    return GridFunction(f.mesh, lin(v, fn))


def mean_layer(f: GridFunction, grid: GridSpec | None = None) -> GridFunction:
    """E^1_0 f + E^2_0 f - E^1_0 E^2_0 f: the part of f not seen by rectangular differences."""
    grid = grid or _grid_of(f.mesh)
    L1, L2 = level_ops(grid, f.mesh)
    e1 = L1.E(f.values, 0)
    e2 = L2.E(f.values, 0)
    return GridFunction(f.mesh, e1 + e2 - L2.E(e1, 0))


def _grid_of(mesh: Mesh) -> GridSpec:
    return GridSpec(mesh.n, mesh.m, mesh.N1, mesh.N2)


# ---------------------------------------------------------------------------
# Haar expansion in the standard grid


Band = tuple[int, tuple[int, ...]]  # (level, signature); level -1 is the unit-cube average layer


def bands(d: int, N: int) -> list[Band]:
    out: list[Band] = [(-1, (0,) * d)]
    for j in range(N):
        out.extend((j, e) for e in signatures(d))
    return out


def _band_analyze(x: np.ndarray, axes, N: int, band: Band) -> np.ndarray:
    j, eta = band
    lev = max(j, 0)
    s = 1 << (N - lev)
    cnt = 2 << lev
    for ax, e in zip(axes, eta):
        x = analyze_axis(x, ax, 0, cnt, s, bool(e))
    return x


def _band_synth(c: np.ndarray, axes, N: int, band: Band) -> np.ndarray:
    j, eta = band
    lev = max(j, 0)
    s = 1 << (N - lev)
    for ax, e in zip(axes, eta):
        c = synth_axis(c, ax, 0, s, 2 << N, bool(e))
    return c


def haar_expand(f: GridFunction) -> dict:
    """Coefficients <f, h_I^eta (x) h_J^delta> keyed by band pairs, arrays indexed by positions."""
    mesh = f.mesh
    a1, a2 = mesh.axes(1), mesh.axes(2)
    out = {}
    for b1 in bands(mesh.n, mesh.N1):
        for b2 in bands(mesh.m, mesh.N2):
            l1, l2 = max(b1[0], 0), max(b2[0], 0)
            scale = sqrt2_pow(l1 * mesh.n + l2 * mesh.m - 2 * mesh.log_cell, f.backend)
            out[(b1, b2)] = lin(f.values, lambda x: _band_analyze(_band_analyze(x, a2, mesh.N2, b2), a1, mesh.N1, b1), scale)
    return out


def haar_reconstruct(coeffs: dict, mesh: Mesh) -> GridFunction:
    a1, a2 = mesh.axes(1), mesh.axes(2)
    total = None
    for (b1, b2), c in coeffs.items():
        l1, l2 = max(b1[0], 0), max(b2[0], 0)
        backend = backend_of(c)
        scale = sqrt2_pow(l1 * mesh.n + l2 * mesh.m, backend)
        part = lin(c, lambda x: _band_synth(_band_synth(x, a2, mesh.N2, b2), a1, mesh.N1, b1), scale)
        total = part if total is None else total + part
    return GridFunction(mesh, total)


def coefficient_energy(coeffs: dict):
    tot = None
    for c in coeffs.values():
        e = (c * c).sum()
        tot = e if tot is None else tot + e
    return tot


# ---------------------------------------------------------------------------
# Serialization


def dumps_gridfunction(f: GridFunction) -> str:
    buf = io.StringIO()
    m = f.mesh
    buf.write(f"GRIDFUNCTION {m.n} {m.m} {m.N1} {m.N2} {f.backend}\n")
    if f.backend == EXACT:
        for q in f.values.to_scalars().ravel():
            buf.write(f"{q.a} {q.b}\n")
    else:
        for v in np.asarray(f.values).ravel():
            buf.write(f"{float(v).hex()}\n")
    return buf.getvalue()


def loads_gridfunction(text: str) -> GridFunction:
    lines = text.strip().splitlines()
    head = lines[0].split()
    if head[0] != "GRIDFUNCTION" or len(head) != 6:
        raise ValueError("not a serialized GridFunction")
    n, m, N1, N2 = (int(x) for x in head[1:5])
    backend = head[5]
    mesh = Mesh(n, m, N1, N2)
    body = lines[1:]
    size = int(np.prod(mesh.shape))
    if len(body) != size:
        raise ValueError(f"expected {size} values, got {len(body)}")
    if backend == EXACT:
        vals = np.array([QSqrt2.from_strings(*ln.split()) for ln in body], dtype=object)
        return GridFunction(mesh, ExactArray.from_scalars(vals.reshape(mesh.shape)))
    vals = np.array([float.fromhex(ln.strip()) for ln in body], dtype=np.float64)
    return GridFunction(mesh, vals.reshape(mesh.shape))


def default_mesh(n: int = 1, m: int = 1, N: int = 3) -> Mesh:
    standard_grid(n, m, N, N)
    return Mesh(n, m, N, N)
