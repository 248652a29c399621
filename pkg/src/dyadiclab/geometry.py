"""Dyadic cubes and (randomly translated) dyadic grids on the box [0,2)^n x [0,2)^m.

Positions are stored in units of the cube side before translation, so a
cube of level j and position t covers ``t * 2^-j + shift_j + [0, 2^-j)``
per axis, with ``shift_j = sum_{j < i <= N} 2^-i omega_i``.  Everything is
resolved on the finest mesh with 2^N cells per unit length.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterator

import numpy as np


Digits = tuple[tuple[int, ...], ...]


def _check_digits(omega, d: int, N: int) -> Digits:
    if omega is None:
        return tuple((0,) * d for _ in range(N))
    rows = tuple(tuple(int(x) for x in np.atleast_1d(row)) for row in omega)
    if len(rows) != N:
        raise ValueError(f"expected {N} digit vectors, got {len(rows)}")
    for row in rows:
        if len(row) != d:
            raise ValueError(f"digit arity {len(row)} does not match dimension {d}")
        if any(x not in (0, 1) for x in row):
            raise ValueError("digits must be 0 or 1")
    return rows


@dataclass(frozen=True)
class GridSpec:
    """A pair of dyadic grids, one per parameter, truncated at depths N1, N2."""

    n: int
    m: int
    N1: int
    N2: int
    omega1: Digits = field(default=())
    omega2: Digits = field(default=())

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise ValueError("dimensions must be nonnegative")
        if self.N1 < 0 or self.N2 < 0:
            raise ValueError("depths must be nonnegative")
        object.__setattr__(self, "omega1", _check_digits(self.omega1 or None, self.n, self.N1))
        object.__setattr__(self, "omega2", _check_digits(self.omega2 or None, self.m, self.N2))

    # per-parameter accessors
    def dim(self, param: int) -> int:
        return self.n if param == 1 else self.m

    def depth(self, param: int) -> int:
        return self.N1 if param == 1 else self.N2

    def digits(self, param: int) -> Digits:
        return self.omega1 if param == 1 else self.omega2

    @property
    def is_standard(self) -> bool:
        return not any(any(r) for r in self.omega1) and not any(any(r) for r in self.omega2)

    def shift_cells(self, param: int, level: int) -> tuple[int, ...]:
        """Translation of level-`level` cubes, in mesh cells, per axis."""
        N = self.depth(param)
        om = self.digits(param)
        d = self.dim(param)
        out = [0] * d
        for i in range(level + 1, N + 1):
            row = om[i - 1]
            for a in range(d):
                out[a] += row[a] << (N - i)
        return tuple(out)

    def shift(self, param: int, level: int) -> tuple[Fraction, ...]:
        N = self.depth(param)
        return tuple(Fraction(c, 1 << N) for c in self.shift_cells(param, level))

    def count(self, param: int, level: int) -> tuple[int, ...]:
        """Number of level cubes per axis with nonnegative position inside [0,2)."""
        N = self.depth(param)
        s = 1 << (N - level)
        return tuple(((2 << N) - o) // s for o in self.shift_cells(param, level))

    def cubes(self, param: int, level: int, unit_only: bool = False) -> Iterator["Cube"]:
        """Cubes of a level; with unit_only, the descendants of the [0,1)^d cubes."""
        if unit_only:
            ranges = [range(1 << level)] * self.dim(param)
        else:
            ranges = [range(c) for c in self.count(param, level)]
        for pos in product(*ranges):
            yield Cube(param, level, tuple(pos), self)

    def all_cubes(self, param: int, max_level: int | None = None, unit_only: bool = False) -> list["Cube"]:
        top = self.depth(param) if max_level is None else max_level
        return [Q for j in range(top + 1) for Q in self.cubes(param, j, unit_only)]

    def mesh_shape(self) -> tuple[int, ...]:
        return (2 << self.N1,) * self.n + (2 << self.N2,) * self.m

    def standard(self) -> "GridSpec":
        return GridSpec(self.n, self.m, self.N1, self.N2)


def standard_grid(n: int, m: int, N1: int, N2: int) -> GridSpec:
    if n < 1 or m < 1 or N1 < 1 or N2 < 1:
        raise ValueError("need n, m, N1, N2 >= 1")
    return GridSpec(n, m, N1, N2)


def shifted_grid(n: int, m: int, N1: int, N2: int, omega1, omega2) -> GridSpec:
    return GridSpec(n, m, N1, N2, _check_digits(omega1, n, N1), _check_digits(omega2, m, N2))


def sample_omega(seed, n: int, N: int) -> Digits:
    """Digits i.i.d. uniform on {0,1}^n for i = 1..N."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if N == 0:
        return ()
    arr = rng.integers(0, 2, size=(N, n))
    return tuple(tuple(int(x) for x in row) for row in arr)


def all_omegas(n: int, N: int) -> Iterator[Digits]:
    """Every digit sequence of length N in {0,1}^n."""
    for bits in product((0, 1), repeat=n * N):
        yield tuple(tuple(bits[i * n:(i + 1) * n]) for i in range(N))


@dataclass(frozen=True)
class Cube:
    param: int
    level: int
    position: tuple[int, ...]
    grid: GridSpec

    def __post_init__(self):
        if self.level < 0 or self.level > self.grid.depth(self.param):
            raise ValueError("level outside 0..depth")
        if len(self.position) != self.grid.dim(self.param):
            raise ValueError("position arity mismatch")

    @property
    def dim(self) -> int:
        return self.grid.dim(self.param)

    @property
    def side(self) -> Fraction:
        return Fraction(1, 1 << self.level)

    @property
    def measure(self) -> Fraction:
        return self.side ** self.dim

    def corner(self) -> tuple[Fraction, ...]:
        sh = self.grid.shift(self.param, self.level)
        return tuple(Fraction(t, 1 << self.level) + s for t, s in zip(self.position, sh))

    def cell_range(self) -> tuple[tuple[int, int], ...]:
        """Half-open cell index range per axis."""
        N = self.grid.depth(self.param)
        s = 1 << (N - self.level)
        sh = self.grid.shift_cells(self.param, self.level)
        return tuple((o + t * s, o + (t + 1) * s) for t, o in zip(self.position, sh))

    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(a, b) for a, b in self.cell_range())

    def inside_box(self) -> bool:
        top = 2 << self.grid.depth(self.param)
        return all(a >= 0 and b <= top for a, b in self.cell_range())

    def children(self) -> list["Cube"]:
        if self.level >= self.grid.depth(self.param):
            raise ValueError("cube at the finest level has no children")
        om = self.grid.digits(self.param)[self.level]
        base = [2 * t + w for t, w in zip(self.position, om)]
        return [Cube(self.param, self.level + 1, tuple(b + e for b, e in zip(base, eps)), self.grid)
                for eps in product((0, 1), repeat=self.dim)]

    def parent(self) -> "Cube":
        if self.level == 0:
            raise ValueError("level-0 cube has no parent within the grid")
        om = self.grid.digits(self.param)[self.level - 1]
        pos = tuple((t - w) // 2 for t, w in zip(self.position, om))
        return Cube(self.param, self.level - 1, pos, self.grid)

    def child_index(self) -> tuple[int, ...]:
        """Which child of the parent this cube is (0/1 per axis)."""
        om = self.grid.digits(self.param)[self.level - 1]
        return tuple((t - w) % 2 for t, w in zip(self.position, om))

    def contains(self, other: "Cube") -> bool:
        if other.param != self.param:
            return False
        return all(a <= c and d <= b for (a, b), (c, d) in zip(self.cell_range(), other.cell_range()))

    def __repr__(self):
        return f"Cube(p{self.param}, level={self.level}, pos={self.position})"


def ancestor(Q: Cube, k: int) -> Cube:
    """The cube Q^(k) of the same grid with side 2^k times that of Q."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k > Q.level:
        raise ValueError("k exceeds the level of the cube")
    out = Q
    for _ in range(k):
        out = out.parent()
    return out


def descendants(Q: Cube, k: int) -> list[Cube]:
    out = [Q]
    for _ in range(k):
        out = [c for P in out for c in P.children()]
    return out


@dataclass(frozen=True)
class Rectangle:
    first: Cube
    second: Cube

    def __post_init__(self):
        if self.first.param != 1 or self.second.param != 2:
            raise ValueError("rectangle needs a parameter-1 and a parameter-2 cube")

    @property
    def measure(self) -> Fraction:
        return self.first.measure * self.second.measure

    def slices(self) -> tuple[slice, ...]:
        return self.first.slices() + self.second.slices()

    def triple_slices(self, shape: tuple[int, ...]) -> tuple[slice, ...]:
        """Cells of the concentric triple 3R, clipped to the box."""
        out = []
        for (a, b), size in zip(self.first.cell_range() + self.second.cell_range(), shape):
            w = b - a
            out.append(slice(max(0, a - w), min(size, b + w)))
        return tuple(out)

    def indicator(self) -> np.ndarray:
        g = self.first.grid
        arr = np.zeros(g.mesh_shape(), dtype=bool)
        arr[self.slices()] = True
        return arr

    def contained_in(self, cells: np.ndarray) -> bool:
        """Cellwise containment in a boolean cell set."""
        return bool(np.all(cells[self.slices()]))
