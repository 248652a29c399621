"""Norms, weights, BMO norms, maximal functions and dyadic square functions (float only)."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import maximum_filter1d

from .geometry import GridSpec
from .haar import GridFunction, Levels, Mesh, analyze_axis, level_ops, signatures, synth_axis
from .scalar import to_float


# ---------------------------------------------------------------------------
# Exponents and weights


@dataclass(frozen=True)
class ExponentTriple:
    p: float
    q: float
    r: float

    def __post_init__(self):
        if not (self.p > 1 and self.q > 1):
            raise ValueError("need 1 < p, q <= inf")
        if not (0.5 < self.r < math.inf):
            raise ValueError("need 1/2 < r < inf")
        if not math.isclose(1 / self.p + 1 / self.q, 1 / self.r, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError("exponents violate 1/p + 1/q = 1/r")

    @classmethod
    def from_pq(cls, p: float, q: float) -> "ExponentTriple":
        return cls(p, q, 1.0 / (1.0 / p + 1.0 / q))

    @property
    def r_dual(self) -> float:
        """r' (infinite for r <= 1, where only restricted weak type duals make sense)."""
        return math.inf if self.r <= 1 else self.r / (self.r - 1)

    @property
    def banach(self) -> bool:
        return self.r > 1


@dataclass(eq=False)
class Weight:
    w: GridFunction

    def __post_init__(self):
        if np.any(to_float(self.w.values) <= 0):
            raise ValueError("weights must be strictly positive")

    @property
    def values(self) -> np.ndarray:
        return to_float(self.w.values)


def _vals(f) -> np.ndarray:
    if isinstance(f, GridFunction):
        return to_float(f.values)
    return np.asarray(f, dtype=np.float64)


def lp_norm(f, p: float, w=None, mesh: Mesh | None = None) -> float:
    """(sum |f|^p w |cell|)^(1/p); p = inf gives the max; p < 1 is the quasi-norm."""
    if p <= 0:
        raise ValueError("p must be positive")
    x = np.abs(_vals(f))
    if mesh is None:
        mesh = f.mesh
    cell = 2.0 ** (-mesh.log_cell)
    wv = 1.0 if w is None else (w.values if isinstance(w, Weight) else _vals(w))
    if math.isinf(p):
        if w is None:
            return float(x.max()) if x.size else 0.0
        return float(np.max(np.where(np.broadcast_to(wv, x.shape) > 0, x, 0.0)))
    return float(np.sum(x ** p * wv) * cell) ** (1.0 / p)


# ---------------------------------------------------------------------------
# Dyadic block statistics on the standard grid


def block_reduce(x: np.ndarray, axes, levels, N_per_axis, func=np.mean) -> np.ndarray:
    """Reduce each axis in `axes` to its dyadic level-l blocks (box [0,2) per axis)."""
    shape = []
    red = []
    k = 0
    for ax in range(x.ndim):
        if ax in axes:
            i = axes.index(ax)
            l, N = levels[i], N_per_axis[i]
            shape += [2 << l, 1 << (N - l)]
            red.append(k + 1)
            k += 2
        else:
            shape.append(x.shape[ax])
            k += 1
    return func(x.reshape(shape), axis=tuple(red))


def block_expand(c: np.ndarray, axes, levels, N_per_axis) -> np.ndarray:
    out = c
    for ax in axes:
        i = axes.index(ax)
        out = np.repeat(out, 1 << (N_per_axis[i] - levels[i]), axis=ax)
    return out


def _param_axes(mesh: Mesh):
    a1, a2 = mesh.axes(1), mesh.axes(2)
    return list(a1), list(a2)


def rectangle_levels(mesh: Mesh):
    """Level pairs of the standard dyadic rectangles in the box."""
    return list(product(range(mesh.N1 + 1), range(mesh.N2 + 1)))


def _levels_vec(mesh: Mesh, l1: int, l2: int):
    axes = list(mesh.axes(1)) + list(mesh.axes(2))
    levels = [l1] * mesh.n + [l2] * mesh.m
    Ns = [mesh.N1] * mesh.n + [mesh.N2] * mesh.m
    return axes, levels, Ns


def ap_characteristic(w, p: float) -> dict:
    """Rectangle A_p characteristic over standard dyadic rectangles, plus the iterated form."""
    if not (1 < p < math.inf):
        raise ValueError("need 1 < p < inf")
    wf = w.w if isinstance(w, Weight) else w
    mesh = wf.mesh
    x = _vals(wf)
    sig = x ** (1.0 - p / (p - 1.0))
    rect = 0.0
    for l1, l2 in rectangle_levels(mesh):
        axes, lv, Ns = _levels_vec(mesh, l1, l2)
        a = block_reduce(x, axes, lv, Ns)
        b = block_reduce(sig, axes, lv, Ns)
        rect = max(rect, float(np.max(a * b ** (p - 1))))
    it = 0.0
    for param in (1, 2):
        axes = list(mesh.axes(param))
        N = mesh.depth(param)
        for l in range(N + 1):
            a = block_reduce(x, axes, [l] * len(axes), [N] * len(axes))
            b = block_reduce(sig, axes, [l] * len(axes), [N] * len(axes))
            it = max(it, float(np.max(a * b ** (p - 1))))
    return {"rectangular": rect, "iterated": it}


# ---------------------------------------------------------------------------
# BMO norms


def _mean_osc(x: np.ndarray, axes, lv, Ns, power: float = 1.0) -> np.ndarray:
    m = block_reduce(x, axes, lv, Ns)
    dev = np.abs(x - block_expand(m, axes, lv, Ns)) ** power
    return block_reduce(dev, axes, lv, Ns) ** (1.0 / power)


def little_bmo(b, power: float = 1.0) -> float:
    """sup over standard dyadic rectangles of the mean (power-)oscillation."""
    mesh = b.mesh
    x = _vals(b)
    best = 0.0
    for l1, l2 in rectangle_levels(mesh):
        axes, lv, Ns = _levels_vec(mesh, l1, l2)
        best = max(best, float(np.max(_mean_osc(x, axes, lv, Ns, power))))
    return best


def little_bmo_shifted(b, max_windows: int = 4_000_000) -> float:
    """sup of the mean oscillation over all mesh-aligned rectangles of dyadic side lengths.

    This is the sup over the rectangles of every shifted grid, which stands in
    for the non-dyadic norm.
    """
    mesh = b.mesh
    x = _vals(b)
    best = 0.0
    sides1 = [1 << (mesh.N1 - l) for l in range(mesh.N1 + 1)]
    sides2 = [1 << (mesh.N2 - l) for l in range(mesh.N2 + 1)]
    for w1 in sides1:
        for w2 in sides2:
            win = (w1,) * mesh.n + (w2,) * mesh.m
            v = sliding_window_view(x, win)
            nd = x.ndim
            # chunk along the first axis to bound memory
            per = max(1, max_windows // max(1, int(np.prod(v.shape[1:]))))
            for s in range(0, v.shape[0], per):
                blk = v[s:s + per]
                inner = tuple(range(nd, 2 * nd))
                mu = blk.mean(axis=inner, keepdims=True)
                osc = np.abs(blk - mu).mean(axis=inner)
                best = max(best, float(osc.max()))
    return best


def one_param_bmo_shifted(x: np.ndarray, mesh: Mesh) -> float:
    """One-parameter BMO over all mesh-aligned cubes of dyadic side; leading axes are a batch."""
    d = mesh.n if mesh.m == 0 else mesh.m
    N = mesh.N1 if mesh.m == 0 else mesh.N2
    x = np.asarray(x, dtype=np.float64)
    nb = x.ndim - d
    best = 0.0
    for l in range(N + 1):
        w = 1 << (N - l)
        v = sliding_window_view(x, (w,) * d, axis=tuple(range(nb, nb + d)))
        inner = tuple(range(nb + d, nb + 2 * d))
        mu = v.mean(axis=inner, keepdims=True)
        osc = np.abs(v - mu).mean(axis=inner)
        if osc.size:
            best = max(best, float(osc.max()))
    return best


def dyadic_bmo_slices(b) -> float:
    """max over both parameters of the sup over slices of the one-parameter dyadic BMO norm."""
    mesh = b.mesh
    x = _vals(b)
    best = 0.0
    for param in (1, 2):
        axes = list(mesh.axes(param))
        N = mesh.depth(param)
        for l in range(N + 1):
            lv = [l] * len(axes)
            Ns = [N] * len(axes)
            best = max(best, float(np.max(_mean_osc(x, axes, lv, Ns))))
    return best


def one_param_bmo(g) -> float:
    """Dyadic BMO norm of a one-parameter function."""
    x = _vals(g)
    mesh = g.mesh
    param = 1 if mesh.m == 0 else 2
    axes = list(range(x.ndim))
    N = mesh.depth(param)
    best = 0.0
    for l in range(N + 1):
        best = max(best, float(np.max(_mean_osc(x, axes, [l] * len(axes), [N] * len(axes)))))
    return best


def haar_energy_by_levels(b) -> dict:
    """|<b, h_I (x) h_J>|^2 summed over signatures, per level pair, as block arrays."""
    mesh = b.mesh
    grid = GridSpec(mesh.n, mesh.m, mesh.N1, mesh.N2)
    L1, L2 = level_ops(grid, mesh)
    x = _vals(b)
    out = {}
    for j1 in range(mesh.N1):
        d1 = L1.D(x, j1)
        for j2 in range(mesh.N2):
            dd = L2.D(d1, j2)
            axes, lv, Ns = _levels_vec(mesh, j1, j2)
            # sum over signatures of squared coefficients = integral of |Delta f|^2 over the rectangle
            out[(j1, j2)] = block_reduce(dd * dd, axes, lv, Ns, np.sum) * 2.0 ** (-mesh.log_cell)
    return out


def _rect_contained(cells: np.ndarray, mesh: Mesh, j1: int, j2: int) -> np.ndarray:
    axes, lv, Ns = _levels_vec(mesh, j1, j2)
    return block_reduce(cells.astype(np.float64), axes, lv, Ns, np.min) > 0.5


def product_bmo_of_set(energy: dict, cells: np.ndarray, mesh: Mesh) -> float:
    meas = cells.sum() * 2.0 ** (-mesh.log_cell)
    if meas == 0:
        return 0.0
    tot = 0.0
    for (j1, j2), e in energy.items():
        tot += float(e[_rect_contained(cells, mesh, j1, j2)].sum())
    return math.sqrt(tot / meas)


def product_bmo(b, n_levels: int = 24, return_family: bool = False):
    """Certified lower bound for the dyadic product BMO norm.

    The family of test sets: every single dyadic rectangle plus the
    super-level sets of the rectangular square function (unions of cells).
    """
    mesh = b.mesh
    energy = haar_energy_by_levels(b)
    best = 0.0
    best_set = "none"
    # single rectangles: energy of all subrectangles over the rectangle measure
    for l1, l2 in rectangle_levels(mesh):
        axes, lv, Ns = _levels_vec(mesh, l1, l2)
        tot = None
        for (j1, j2), e in energy.items():
            if j1 < l1 or j2 < l2:
                continue
            # aggregate the level-(j1,j2) energies to level-(l1,l2) blocks
            eaxes = list(range(e.ndim))
            shape = []
            red = []
            k = 0
            for i, ax in enumerate(eaxes):
                lvl_from = j1 if i < mesh.n else j2
                lvl_to = l1 if i < mesh.n else l2
                shape += [2 << lvl_to, 1 << (lvl_from - lvl_to)]
                red.append(k + 1)
                k += 2
            agg = e.reshape(shape).sum(axis=tuple(red))
            tot = agg if tot is None else tot + agg
        if tot is None:
            continue
        meas = 2.0 ** (-(l1 * mesh.n + l2 * mesh.m))
        val = math.sqrt(float(tot.max()) / meas)
        if val > best:
            best, best_set = val, f"rectangle level ({l1},{l2})"
    sq = square_function(b, "rect").values
    qs = np.unique(np.quantile(sq[sq > 0], np.linspace(0, 1, n_levels, endpoint=False))) if np.any(sq > 0) else []
    for t in qs:
        cells = sq >= t
        val = product_bmo_of_set(energy, cells, mesh)
        if val > best:
            best, best_set = val, f"square-function level set t={t:.4g}"
    if return_family:
        return best, best_set
    return best


def bmo_norms(b) -> dict:
    """Dyadic (per-slice), little and product BMO norms of b."""
    pb, fam = product_bmo(b, return_family=True)
    return {
        "dyadic_bmo": dyadic_bmo_slices(b),
        "little_bmo": little_bmo(b),
        "product_bmo": pb,
        "product_bmo_family": fam,
    }


def john_nirenberg_profile(b, powers=(1.0, 2.0, 4.0)) -> dict:
    """p-oscillation versions of little bmo; a diagnostic, not an assertion."""
    return {p: little_bmo(b, p) for p in powers}


# ---------------------------------------------------------------------------
# Maximal functions


def _dyadic_max(x: np.ndarray, mesh: Mesh, params=(1, 2)) -> np.ndarray:
    a = np.abs(x)
    out = np.zeros_like(a)
    if params == (1, 2):
        pairs = rectangle_levels(mesh)
    elif params == (1,):
        pairs = [(l, None) for l in range(mesh.N1 + 1)]
    else:
        pairs = [(None, l) for l in range(mesh.N2 + 1)]
    for l1, l2 in pairs:
        axes, lv, Ns = [], [], []
        if l1 is not None:
            axes += list(mesh.axes(1))
            lv += [l1] * mesh.n
            Ns += [mesh.N1] * mesh.n
        if l2 is not None:
            axes += list(mesh.axes(2))
            lv += [l2] * mesh.m
            Ns += [mesh.N2] * mesh.m
        m = block_expand(block_reduce(a, axes, lv, Ns), axes, lv, Ns)
        np.maximum(out, m, out=out)
    return out


def _window_sides(N: int, family: str = "full") -> list[int]:
    total = 2 << N
    sides = set()
    for a in range(N + 2):
        for c in ((1, 3) if family == "full" else (1,)):
            w = c << a
            if w <= total:
                sides.add(w)
    return sorted(sides)


def _spread_max(A: np.ndarray, axis: int, w: int, L: int) -> np.ndarray:
    """out[x] = max of A[s] over window starts s with s <= x < s + w."""
    pad = [(0, 0)] * A.ndim
    pad[axis] = (0, L - A.shape[axis])
    P = np.pad(A, pad, constant_values=-np.inf)
    return maximum_filter1d(P, size=w, axis=axis, origin=(w - 1) - w // 2, mode="constant", cval=-np.inf)


def _window_sums(x: np.ndarray, axis: int, w: int) -> np.ndarray:
    c = np.cumsum(x, axis=axis)
    pad = [(0, 0)] * x.ndim
    pad[axis] = (1, 0)
    c = np.pad(c, pad)
    n = x.shape[axis]
    hi = [slice(None)] * x.ndim
    lo = [slice(None)] * x.ndim
    hi[axis] = slice(w, n + 1)
    lo[axis] = slice(0, n + 1 - w)
    return c[tuple(hi)] - c[tuple(lo)]


def strong_max_nd(x: np.ndarray, mesh: Mesh, batch_axes: int = 0, family: str = "full",
                  params=(1, 2)) -> np.ndarray:
    """Mesh-aligned strong maximal function over boxes with sides 2^a or 3*2^a cells.

    Leading `batch_axes` axes are treated as independent samples.  The full
    family contains every (clipped) concentric triple of a dyadic rectangle;
    family="dyadic" keeps only the sides 2^a.  With params=(1,) or (2,) the
    windows act on one parameter only.
    """
    a = np.abs(np.asarray(x, dtype=np.float64))
    axes = [batch_axes + ax for p in params for ax in mesh.axes(p)]
    Ns = [mesh.depth(p) for p in params for _ in mesh.axes(p)]
    side_lists = [_window_sides(N, family) for N in Ns]
    out = np.zeros_like(a)
    # separable window sums per axis, cached by (axis, side)
    for sides in product(*side_lists):
        s = a
        for ax, w in zip(axes, sides):
            s = _window_sums(s, ax, w)
        s = s / float(np.prod(sides))
        for ax, w in zip(axes, sides):
            s = _spread_max(s, ax, w, a.shape[ax])
        np.maximum(out, s, out=out)
    return out


def adapted_max_one_param(bvals: np.ndarray, fvals: np.ndarray, N: int, d: int) -> np.ndarray:
    """M_b f over all mesh-aligned cubes of dyadic side (every shifted grid); batch over leading axes.

    bvals, fvals have shape batch + (2^(N+1),)*d.
    """
    nb = bvals.ndim - d
    total = 2 << N
    out = np.zeros(fvals.shape)
    af = np.abs(fvals)
    for l in range(N + 1):
        w = 1 << (N - l)
        win = (w,) * d
        axes = tuple(range(nb, nb + d))
        vb = sliding_window_view(bvals, win, axis=axes)
        vf = sliding_window_view(af, win, axis=axes)
        inner = tuple(range(nb + d, nb + 2 * d))
        mu = vb.mean(axis=inner, keepdims=True)
        A = (np.abs(vb - mu) * vf).mean(axis=inner)
        for ax in axes:
            A = _spread_max(A, ax, w, total)
        np.maximum(out, A, out=out)
    return out


def adapted_max(b: GridFunction, f: GridFunction) -> GridFunction:
    """Bi-parameter M_b f over mesh-aligned rectangles of dyadic side lengths."""
    mesh = f.mesh
    bx = _vals(b)
    fx = np.abs(_vals(f))
    out = np.zeros_like(fx)
    nd = fx.ndim
    for l1 in range(mesh.N1 + 1):
        for l2 in range(mesh.N2 + 1):
            win = (1 << (mesh.N1 - l1),) * mesh.n + (1 << (mesh.N2 - l2),) * mesh.m
            vb = sliding_window_view(bx, win)
            vf = sliding_window_view(fx, win)
            inner = tuple(range(nd, 2 * nd))
            mu = vb.mean(axis=inner, keepdims=True)
            A = (np.abs(vb - mu) * vf).mean(axis=inner)
            for ax, w in enumerate(win):
                A = _spread_max(A, ax, w, fx.shape[ax])
            np.maximum(out, A, out=out)
    return GridFunction(mesh, out)


def phi_b(b: GridFunction, f: GridFunction, axis: int, grid: GridSpec | None = None) -> GridFunction:
    """phi_{D^m,b}(f) (axis=2) or phi_{D^n,b}(f) (axis=1).

    For axis=2: sum over J and signatures of M_{<b>_{J,2}} <f,h_J>_2 (x) h_J,
    with M over all mesh-aligned dyadic-side cubes in the other parameter.
    """
    mesh = f.mesh
    grid = grid or GridSpec(mesh.n, mesh.m, mesh.N1, mesh.N2)
    x = _vals(f)
    bx = _vals(b)
    L = Levels(grid, axis, mesh)
    other = 1 if axis == 2 else 2
    d_other = mesh.dim(other)
    N_other = mesh.depth(other)
    ax_this = list(mesh.axes(axis))
    ax_other = list(mesh.axes(other))
    # move the summed parameter's axes to the front
    perm = ax_this + ax_other
    inv = np.argsort(perm)
    xf = np.transpose(x, perm)
    bf = np.transpose(bx, perm)
    d = mesh.dim(axis)
    N = mesh.depth(axis)
    out = np.zeros_like(xf)
    for j in range(N):
        s = 1 << (N - j)
        offs = grid.shift_cells(axis, j)
        cnts = grid.count(axis, j)
        # coefficient arrays: positions (cnts) x signatures x other-parameter cells
        for eta in signatures(d):
            c = xf
            for a in reversed(range(d)):
                c = analyze_axis(c, a, offs[a], cnts[a], s, bool(eta[a]))
            c = c * 2.0 ** (j * d / 2.0 - N * d)
            bm = bf
            for a in reversed(range(d)):
                bm = analyze_axis(bm, a, offs[a], cnts[a], s, False)
            bm = bm * 2.0 ** (-(N - j) * d)
            Mc = adapted_max_one_param(bm.reshape((-1,) + bm.shape[d:]), c.reshape((-1,) + c.shape[d:]),
                                       N_other, d_other).reshape(c.shape)
            g = Mc
            for a in range(d):
                g = synth_axis(g, a, offs[a], s, 2 << N, bool(eta[a]))
            out += g * 2.0 ** (j * d / 2.0)
    return GridFunction(mesh, np.transpose(out, inv))


def maximal(f, kind: str, b: GridFunction | None = None, s: float = 1.0, grid: GridSpec | None = None) -> GridFunction:
    """Maximal operators; kinds: dyadic_M, strong_M, M, M_s, M_b, phi_b_axis1, phi_b_axis2, M1, M2."""
    mesh = f.mesh
    x = _vals(f)
    if kind == "dyadic_M":
        if mesh.m == 0 or mesh.n == 0:
            params = (1,) if mesh.m == 0 else (2,)
            return GridFunction(mesh, _dyadic_max(x, mesh, params))
        return GridFunction(mesh, _dyadic_max(x, mesh))
    if kind == "strong_M":
        return GridFunction(mesh, _dyadic_max(x, mesh))
    if kind == "M1":
        return GridFunction(mesh, _dyadic_max(x, mesh, (1,)))
    if kind == "M2":
        return GridFunction(mesh, _dyadic_max(x, mesh, (2,)))
    if kind == "M":
        return GridFunction(mesh, strong_max_nd(x, mesh))
    if kind == "M_s":
        if s <= 0:
            raise ValueError("s must be positive")
        return GridFunction(mesh, strong_max_nd(np.abs(x) ** s, mesh) ** (1.0 / s))
    if kind in ("M_b", "phi_b_axis1", "phi_b_axis2"):
        if b is None:
            raise ValueError(f"{kind} needs a symbol b")
        if kind == "M_b":
            if mesh.m == 0 or mesh.n == 0:
                param = 1 if mesh.m == 0 else 2
                return GridFunction(mesh, adapted_max_one_param(_vals(b), x, mesh.depth(param), mesh.dim(param)))
            return adapted_max(b, f)
        return phi_b(b, f, 1 if kind == "phi_b_axis1" else 2, grid)
    raise ValueError(f"unknown maximal kind {kind!r}")


# ---------------------------------------------------------------------------
# Square functions


def square_function(f, kind: str = "rect", grid: GridSpec | None = None) -> GridFunction:
    mesh = f.mesh
    grid = grid or GridSpec(mesh.n, mesh.m, mesh.N1, mesh.N2)
    L1, L2 = level_ops(grid, mesh)
    x = _vals(f)
    acc = np.zeros_like(x)
    if kind == "rect":
        for j2 in range(mesh.N2):
            d2 = L2.D(x, j2)
            for j1 in range(mesh.N1):
                acc += L1.D(d2, j1) ** 2
    elif kind == "param1":
        for j1 in range(mesh.N1):
            acc += L1.D(x, j1) ** 2
    elif kind == "param2":
        for j2 in range(mesh.N2):
            acc += L2.D(x, j2) ** 2
    else:
        raise ValueError(f"unknown square function kind {kind!r}")
    return GridFunction(mesh, np.sqrt(acc))


def square_function_energy_exact(f: GridFunction, grid: GridSpec | None = None):
    """||S_rect f||_2^2 computed without square roots (works in the exact backend)."""
    mesh = f.mesh
    grid = grid or GridSpec(mesh.n, mesh.m, mesh.N1, mesh.N2)
    L1, L2 = level_ops(grid, mesh)
    tot = None
    for j2 in range(mesh.N2):
        d2 = L2.D(f.values, j2)
        for j1 in range(mesh.N1):
            dd = L1.D(d2, j1)
            e = (dd * dd).sum()
            tot = e if tot is None else tot + e
    from .scalar import dyadic
    return tot * dyadic(1, mesh.log_cell, f.backend)


# ---------------------------------------------------------------------------
# Random generation helpers


def random_weight(mesh: Mesh, rng: np.random.Generator, max_a2: float = 4.0, roughness: float = 1.0,
                  support_unit: bool = False) -> Weight:
    """A random positive weight exp(h) with [w]_{A_2} <= max_a2 (scaled down if needed)."""
    grid = GridSpec(mesh.n, mesh.m, mesh.N1, mesh.N2)
    L1, L2 = level_ops(grid, mesh)
    h = np.zeros(mesh.shape)
    # random multiscale field: independent level-pair bumps
    for j1 in range(min(mesh.N1, 4)):
        for j2 in range(min(mesh.N2, 4)):
            z = rng.standard_normal(mesh.shape)
            h += L1.D(L2.D(z, j2), j1) * roughness * 2.0 ** (-0.5 * (j1 + j2))
    scale = 1.0
    for _ in range(60):
        w = np.exp(scale * h)
        if ap_characteristic(GridFunction(mesh, w), 2.0)["rectangular"] <= max_a2:
            return Weight(GridFunction(mesh, w))
        scale *= 0.8
    return Weight(GridFunction(mesh, np.ones(mesh.shape)))
