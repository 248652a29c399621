"""Scalars and arrays over Q(sqrt 2), plus a thin float/exact backend layer.

Haar normalisations are powers of 2^(1/2), so every quantity built from
rational mesh data stays inside Q(sqrt 2).  ``QSqrt2`` is a field element
with Fraction parts; ``ExactArray`` stores ``(a + b*sqrt2) / den`` with
object arrays of Python ints and a shared positive integer denominator.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Integral, Rational

import numpy as np

SQRT2 = math.sqrt(2.0)

EXACT = "exact"
FLOAT = "float"
BACKENDS = (EXACT, FLOAT)


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (Integral, Rational)):
        return Fraction(x)
    if isinstance(x, (float, np.floating)):
        return Fraction(float(x))
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Fraction")


class QSqrt2:
    """Exact real number a + b*sqrt(2) with rational a, b."""

    __slots__ = ("a", "b")

    def __init__(self, a=0, b=0):
        self.a = _frac(a)
        self.b = _frac(b)

    @classmethod
    def coerce(cls, x) -> "QSqrt2":
        if isinstance(x, QSqrt2):
            return x
        return cls(x, 0)

    @classmethod
    def sqrt2_pow(cls, k: int) -> "QSqrt2":
        """Exact value of 2^(k/2)."""
        q, r = divmod(int(k), 2)
        base = Fraction(2) ** q
        return cls(0, base) if r else cls(base, 0)

    def __add__(self, other):
        if isinstance(other, ExactArray):
            return other + self
        o = QSqrt2.coerce(other)
        return QSqrt2(self.a + o.a, self.b + o.b)

    __radd__ = __add__

    def __neg__(self):
        return QSqrt2(-self.a, -self.b)

    def __sub__(self, other):
        return self + (-QSqrt2.coerce(other) if not isinstance(other, ExactArray) else -other)

    def __rsub__(self, other):
        return QSqrt2.coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, ExactArray):
            return other * self
        o = QSqrt2.coerce(other)
        return QSqrt2(self.a * o.a + 2 * self.b * o.b, self.a * o.b + self.b * o.a)

    __rmul__ = __mul__

    def norm(self) -> Fraction:
        """Field norm a^2 - 2 b^2."""
        return self.a * self.a - 2 * self.b * self.b

    def inverse(self) -> "QSqrt2":
        nrm = self.norm()
        if nrm == 0:
            raise ZeroDivisionError("division by zero in Q(sqrt2)")
        return QSqrt2(self.a / nrm, -self.b / nrm)

    def __truediv__(self, other):
        return self * QSqrt2.coerce(other).inverse()

    def __rtruediv__(self, other):
        return QSqrt2.coerce(other) * self.inverse()

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        out = QSqrt2(1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def sign(self) -> int:
        return _sign_pair(self.a, self.b)

    def __abs__(self):
        return -self if self.sign() < 0 else self

    def _cmp(self, other) -> int:
        return (self - QSqrt2.coerce(other)).sign()

    def __eq__(self, other):
        if isinstance(other, (QSqrt2, Integral, Rational)):
            return self._cmp(other) == 0
        return NotImplemented

    def __lt__(self, other):
        return self._cmp(other) < 0

    def __le__(self, other):
        return self._cmp(other) <= 0

    def __gt__(self, other):
        return self._cmp(other) > 0

    def __ge__(self, other):
        return self._cmp(other) >= 0

    def __hash__(self):
        return hash((self.a, self.b))

    def __bool__(self):
        return bool(self.a) or bool(self.b)

    def __float__(self):
        return float(self.a) + SQRT2 * float(self.b)

    def __repr__(self):
        return f"QSqrt2({self.a}, {self.b})"

    def to_strings(self) -> tuple[str, str]:
        return str(self.a), str(self.b)

    @classmethod
    def from_strings(cls, a: str, b: str) -> "QSqrt2":
        return cls(Fraction(a), Fraction(b))


def _sign_pair(a, b) -> int:
    """Sign of a + b*sqrt(2) for rationals (or ints) a, b."""
    sa = (a > 0) - (a < 0)
    sb = (b > 0) - (b < 0)
    if sb == 0:
        return sa
    if sa == 0 or sa == sb:
        return sb
    # opposite signs: compare a^2 with 2 b^2
    d = a * a - 2 * b * b
    return sa if d > 0 else (-sa if d < 0 else 0)


def _obj(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.dtype == object:
        return arr
    if arr.dtype == bool:
        arr = arr.astype(np.int64)
    if not np.issubdtype(arr.dtype, np.integer):
        raise TypeError("exact arrays need integer data")
    out = np.empty(arr.shape, dtype=object)
    out[...] = arr.tolist() if arr.ndim else int(arr)
    return out


def _oa(x) -> np.ndarray:
    return x if isinstance(x, np.ndarray) else np.asarray(x, dtype=object)


def _int_obj_zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(0)
    return out


class ExactArray:
    """Array of Q(sqrt 2) values stored as (a + b*sqrt2) / den.

    ``b`` may be ``None`` for purely rational data, which halves the work.
    """

    __slots__ = ("a", "b", "den")
    __array_priority__ = 1000

    def __init__(self, a, b=None, den: int = 1):
        self.a = _obj(a)
        self.b = None if b is None else _obj(b)
        if self.b is not None and self.b.shape != self.a.shape:
            self.a, self.b = np.broadcast_arrays(self.a, self.b)
            self.a, self.b = self.a.copy(), self.b.copy()
        self.den = int(den)
        if self.den <= 0:
            raise ValueError("denominator must be positive")

    # construction -----------------------------------------------------
    @classmethod
    def zeros(cls, shape) -> "ExactArray":
        return cls(_int_obj_zeros(shape))

    @classmethod
    def from_fractions(cls, values) -> "ExactArray":
        arr = np.asarray(values, dtype=object)
        flat = [_frac(v) for v in arr.ravel()]
        den = 1
        for v in flat:
            den = math.lcm(den, v.denominator)
        a = np.array([v.numerator * (den // v.denominator) for v in flat], dtype=object)
        return cls(a.reshape(arr.shape), None, den)

    @classmethod
    def from_scalars(cls, values) -> "ExactArray":
        arr = np.asarray(values, dtype=object)
        flat = [QSqrt2.coerce(v) for v in arr.ravel()]
        den = 1
        for v in flat:
            den = math.lcm(den, v.a.denominator, v.b.denominator)
        a = np.array([v.a.numerator * (den // v.a.denominator) for v in flat], dtype=object)
        b = np.array([v.b.numerator * (den // v.b.denominator) for v in flat], dtype=object)
        out = cls(a.reshape(arr.shape), b.reshape(arr.shape), den)
        return out._drop_b()

    @classmethod
    def from_float_dyadic(cls, values) -> "ExactArray":
        """Exact image of float data (every float is a dyadic rational)."""
        arr = np.asarray(values, dtype=np.float64)
        return cls.from_fractions(np.vectorize(Fraction, otypes=[object])(arr) if arr.size else arr.astype(object))

    # basic protocol ---------------------------------------------------
    @property
    def shape(self):
        return self.a.shape

    @property
    def ndim(self):
        return self.a.ndim

    @property
    def size(self):
        return self.a.size

    def __len__(self):
        return len(self.a)

    def copy(self) -> "ExactArray":
        return ExactArray(self.a.copy(), None if self.b is None else self.b.copy(), self.den)

    def _map(self, fn) -> "ExactArray":
        return ExactArray(fn(self.a), None if self.b is None else fn(self.b), self.den)

    def reshape(self, *shape) -> "ExactArray":
        return self._map(lambda x: x.reshape(*shape))

    def transpose(self, *axes) -> "ExactArray":
        return self._map(lambda x: x.transpose(*axes))

    def moveaxis(self, src, dst) -> "ExactArray":
        return self._map(lambda x: np.moveaxis(x, src, dst))

    def ravel(self) -> "ExactArray":
        return self._map(np.ravel)

    def broadcast_to(self, shape) -> "ExactArray":
        return self._map(lambda x: np.broadcast_to(x, shape).copy())

    @property
    def T(self):
        return self.transpose()

    def __getitem__(self, key):
        a = self.a[key]
        b = None if self.b is None else self.b[key]
        if not isinstance(a, np.ndarray):
            return QSqrt2(Fraction(a, self.den), Fraction(0 if b is None else b, self.den))
        return ExactArray(a, b, self.den)

    def item(self, *idx) -> QSqrt2:
        a = self.a.item(*idx) if idx else self.a.item()
        b = 0 if self.b is None else (self.b.item(*idx) if idx else self.b.item())
        return QSqrt2(Fraction(a, self.den), Fraction(b, self.den))

    def __setitem__(self, key, value):
        v = as_exact(value)
        den = math.lcm(self.den, v.den)
        self._rescale(den)
        fa = den // v.den
        self.a[key] = v.a * fa if fa != 1 else v.a
        if v.b is not None:
            if self.b is None:
                self.b = _int_obj_zeros(self.a.shape)
            self.b[key] = v.b * fa if fa != 1 else v.b
        elif self.b is not None:
            self.b[key] = 0

    def _rescale(self, den: int):
        if den == self.den:
            return
        f = den // self.den
        self.a = _oa(self.a * f)
        if self.b is not None:
            self.b = _oa(self.b * f)
        self.den = den

    def _drop_b(self) -> "ExactArray":
        if self.b is not None and not np.any(self.b != 0):
            self.b = None
        return self

    def normalize(self) -> "ExactArray":
        """Divide out the common factor of numerators and denominator."""
        if self.a.size == 0:
            return self
        g = int(np.gcd.reduce(self.a.ravel())) if self.a.size else 0
        if self.b is not None:
            g = math.gcd(g, int(np.gcd.reduce(self.b.ravel())))
        g = math.gcd(g, self.den)
        if g > 1:
            self.a = self.a // g
            if self.b is not None:
                self.b = self.b // g
            self.den //= g
        if g == 0:
            self.den = 1
        return self._drop_b()

    # arithmetic -------------------------------------------------------
    def _aligned(self, other: "ExactArray"):
        den = math.lcm(self.den, other.den)
        f1, f2 = den // self.den, den // other.den
        a1 = _oa(self.a * f1) if f1 != 1 else self.a
        a2 = _oa(other.a * f2) if f2 != 1 else other.a
        b1 = None if self.b is None else (_oa(self.b * f1) if f1 != 1 else self.b)
        b2 = None if other.b is None else (_oa(other.b * f2) if f2 != 1 else other.b)
        return den, a1, b1, a2, b2

    def __add__(self, other):
        if isinstance(other, (float, np.floating)) or (isinstance(other, np.ndarray) and other.dtype.kind == "f"):
            return NotImplemented
        o = as_exact(other)
        den, a1, b1, a2, b2 = self._aligned(o)
        a = _oa(a1 + a2)
        if b1 is not None and b2 is not None:
            b = _oa(b1 + b2)
        elif b1 is not None or b2 is not None:
            b = np.broadcast_to(b1 if b1 is not None else b2, a.shape).copy()
        else:
            b = None
        return _post(ExactArray(a, b, den))

    __radd__ = __add__

    def __neg__(self):
        return ExactArray(_oa(-self.a), None if self.b is None else _oa(-self.b), self.den)

    def __sub__(self, other):
        if isinstance(other, (float, np.floating)) or (isinstance(other, np.ndarray) and other.dtype.kind == "f"):
            return NotImplemented
        return self + (-as_exact(other))

    def __rsub__(self, other):
        return as_exact(other) - self

    def __mul__(self, other):
        if isinstance(other, (float, np.floating)) or (isinstance(other, np.ndarray) and other.dtype.kind == "f"):
            return NotImplemented
        o = as_exact(other)
        a = self.a * o.a
        b = None
        if self.b is not None and o.b is not None:
            a = a + 2 * (self.b * o.b)
        if self.b is not None:
            b = self.b * o.a
        if o.b is not None:
            t = self.a * o.b
            b = t if b is None else b + t
        a = _oa(a)
        if b is not None:
            b = _oa(b)
            if b.shape != a.shape:
                b = np.broadcast_to(b, a.shape).copy()
        return _post(ExactArray(a, b, self.den * o.den))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, ExactArray):
            raise TypeError("elementwise division of exact arrays is not supported")
        return self * QSqrt2.coerce(other).inverse()

    def sum(self, axis=None, keepdims=False):
        a = self.a.sum(axis=axis, keepdims=keepdims)
        b = None if self.b is None else self.b.sum(axis=axis, keepdims=keepdims)
        if axis is None and not keepdims:
            return QSqrt2(Fraction(int(a), self.den), Fraction(0 if b is None else int(b), self.den))
        return ExactArray(np.asarray(a, dtype=object), None if b is None else np.asarray(b, dtype=object), self.den)

    def mean(self, axis=None, keepdims=False):
        s = self.sum(axis=axis, keepdims=keepdims)
        cnt = self.size if axis is None else int(np.prod([self.shape[i] for i in np.atleast_1d(axis)]))
        if isinstance(s, QSqrt2):
            return s / cnt
        return ExactArray(s.a, s.b, s.den * cnt)

    # comparisons and conversion --------------------------------------
    def sign(self) -> np.ndarray:
        if self.b is None:
            return np.sign(self.a).astype(np.int64)
        f = np.frompyfunc(_sign_pair, 2, 1)
        return f(self.a, self.b).astype(np.int64)

    def __abs__(self):
        s = self.sign()
        return self * s

    def is_zero(self) -> bool:
        if np.any(self.a != 0):
            return False
        return self.b is None or not np.any(self.b != 0)

    def to_float(self) -> np.ndarray:
        return _ints_to_float(self.a, self.den) + (
            0.0 if self.b is None else SQRT2 * _ints_to_float(self.b, self.den))

    def to_scalars(self) -> np.ndarray:
        out = np.empty(self.shape, dtype=object)
        bflat = None if self.b is None else self.b.ravel()
        for i, x in enumerate(self.a.ravel()):
            out.flat[i] = QSqrt2(Fraction(int(x), self.den), Fraction(0 if bflat is None else int(bflat[i]), self.den))
        return out

    def __eq__(self, other):
        return NotImplemented

    __hash__ = None

    def __repr__(self):
        return f"ExactArray(shape={self.shape}, den={self.den}, irrational={self.b is not None})"


def _ints_to_float(x: np.ndarray, den: int) -> np.ndarray:
    flat = x.ravel()
    big = 1 << 52
    if den <= big and all(-big <= int(v) <= big for v in flat):
        return (x.astype(np.float64) / float(den)).reshape(x.shape)
    return np.array([float(Fraction(int(v), den)) for v in flat], dtype=np.float64).reshape(x.shape)


def _post(x: ExactArray) -> ExactArray:
    # keep denominators from growing without bound
    if x.den > 1 << 256:
        x.normalize()
    return x


def as_exact(x) -> ExactArray:
    if isinstance(x, ExactArray):
        return x
    if isinstance(x, QSqrt2):
        a, b = x.a, x.b
        den = math.lcm(a.denominator, b.denominator)
        bn = b.numerator * (den // b.denominator)
        return ExactArray(np.array(a.numerator * (den // a.denominator), dtype=object),
                          None if bn == 0 else np.array(bn, dtype=object), den)
    if isinstance(x, (Integral, Fraction)):
        f = _frac(x)
        return ExactArray(np.array(f.numerator, dtype=object), None, f.denominator)
    if isinstance(x, np.ndarray):
        if x.dtype == object:
            return ExactArray.from_scalars(x)
        if x.dtype.kind in "biu":
            return ExactArray(x)
    raise TypeError(f"cannot use {type(x).__name__} in exact arithmetic")


# backend helpers ---------------------------------------------------------

def is_exact(x) -> bool:
    return isinstance(x, (ExactArray, QSqrt2))


def backend_of(x) -> str:
    return EXACT if is_exact(x) else FLOAT


def zeros(shape, backend: str = FLOAT):
    if backend == EXACT:
        return ExactArray.zeros(shape)
    return np.zeros(shape, dtype=np.float64)


def sqrt2_pow(k: int, backend: str = FLOAT):
    """2^(k/2) in the requested backend."""
    if backend == EXACT:
        return QSqrt2.sqrt2_pow(k)
    return 2.0 ** (k / 2.0)


def dyadic(num: int, log2den: int, backend: str = FLOAT):
    """The number num / 2^log2den."""
    if backend == EXACT:
        return Fraction(num, 1 << log2den) if log2den >= 0 else Fraction(num * (1 << -log2den))
    return num * 2.0 ** (-log2den)


def to_float(x):
    if isinstance(x, ExactArray):
        return x.to_float()
    if isinstance(x, QSqrt2):
        return float(x)
    if isinstance(x, Fraction):
        return float(x)
    return np.asarray(x, dtype=np.float64) if isinstance(x, np.ndarray) else float(x)


def convert(x, backend: str):
    """Convert an array to the given backend (float -> exact is exact on dyadic data)."""
    if backend == EXACT:
        if isinstance(x, ExactArray):
            return x
        arr = np.asarray(x)
        if arr.dtype.kind in "biu":
            return ExactArray(arr)
        return ExactArray.from_float_dyadic(arr)
    return to_float(x)


def is_zero(x) -> bool:
    if isinstance(x, ExactArray):
        return x.is_zero()
    if isinstance(x, QSqrt2):
        return not x
    return not np.any(np.asarray(x) != 0)


def abs_(x):
    return abs(x)


def einsum(subscripts: str, *ops):
    """einsum over float arrays or ExactArrays (no mixing of float with exact)."""
    if not any(isinstance(o, (ExactArray, QSqrt2)) for o in ops):
        return np.einsum(subscripts, *ops, optimize=True)
    ex = [as_exact(o) for o in ops]
    den = 1
    for o in ex:
        den *= o.den
    parts = [(o.a, o.b) for o in ex]
    a_acc = None
    b_acc = None
    nops = len(ex)
    for mask in range(1 << nops):
        arrs = []
        skip = False
        nb = 0
        for i in range(nops):
            if mask >> i & 1:
                if parts[i][1] is None:
                    skip = True
                    break
                arrs.append(parts[i][1])
                nb += 1
            else:
                arrs.append(parts[i][0])
        if skip:
            continue
        term = np.einsum(subscripts, *arrs, optimize=False)
        term = np.asarray(term, dtype=object)
        factor = 1 << (nb // 2)
        if factor != 1:
            term = term * factor
        if nb % 2:
            b_acc = term if b_acc is None else b_acc + term
        else:
            a_acc = term if a_acc is None else a_acc + term
    if a_acc is None:
        a_acc = np.zeros_like(b_acc)
    out = ExactArray(a_acc, b_acc, den)
    if out.ndim == 0:
        return out.item()
    return _post(out)
