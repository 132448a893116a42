"""Grassmann algebra over ``q`` odd generators with symbolic coefficients.

A :class:`SuperNumber` is a sparse map from generator subsets to
:class:`~superint.expr.Expr` coefficients. Subsets are bitmasks, bit ``j-1``
standing for the generator ``xi_j``, and a coefficient always multiplies the
canonically ordered monomial ``xi_{i1} xi_{i2} ... (i1 < i2 < ...)``.
"""

from __future__ import annotations

import enum
import math
from functools import lru_cache
from itertools import combinations

import numpy as np

from . import expr as E
from .errors import (
    IndexOutOfRange,
    MismatchedGeneratorCount,
    NotEven,
    ZeroBody,
)

__all__ = [
    "Parity",
    "SuperNumber",
    "generator",
    "scalar",
    "mul",
    "invert_even",
    "compose_scalar",
    "superderivative",
    "reorder_sign",
    "popcount",
    "masks_of_grade",
]

MAX_GENERATORS = 16


class Parity(enum.Enum):
    EVEN = 0
    ODD = 1
    MIXED = -1

    def __add__(self, other):
        if self is Parity.MIXED or other is Parity.MIXED:
            return Parity.MIXED
        return Parity((self.value + other.value) % 2)


def popcount(mask: int) -> int:
    return bin(mask).count("1")


@lru_cache(maxsize=None)
def reorder_sign(a: int, b: int) -> int:
    """Sign of ``xi^a xi^b = sign * xi^(a|b)`` for disjoint masks ``a, b``.

    Counts the pairs ``i in a, j in b`` with ``i > j``.
    """
    n = 0
    bb = b
    while bb:
        low = bb & -bb
        # bits of a above this bit of b
        n += popcount(a & ~((low << 1) - 1))
        bb ^= low
    return -1 if n & 1 else 1


def masks_of_grade(q: int, k: int):
    for idx in combinations(range(q), k):
        m = 0
        for i in idx:
            m |= 1 << i
        yield m


class SuperNumber:
    """Element of ``C(u) [xi_1, ..., xi_q]``.

    Parameters
    ----------
    q : int
        Number of odd generators.
    coeffs : dict, optional
        Map from bitmask to coefficient (anything accepted by
        :func:`superint.expr.as_expr`). Zero coefficients are dropped.
    """

    __slots__ = ("q", "coeffs")

    def __init__(self, q: int, coeffs: dict | None = None):
        if q < 0 or q > MAX_GENERATORS:
            raise ValueError(f"q must lie in 0..{MAX_GENERATORS}")
        self.q = q
        full = (1 << q) - 1
        store = {}
        for m, c in (coeffs or {}).items():
            if m & ~full:
                raise IndexOutOfRange(f"monomial {m:b} uses a generator beyond q={q}")
            c = E.as_expr(c)
            if c is not E.ZERO:
                store[m] = c
        self.coeffs = store

    # -- structure --------------------------------------------------------

    def __getitem__(self, mask: int):
        return self.coeffs.get(mask, E.ZERO)

    def __iter__(self):
        return iter(sorted(self.coeffs.items(), key=lambda kv: (popcount(kv[0]), kv[0])))

    @property
    def body(self) -> E.Expr:
        return self.coeffs.get(0, E.ZERO)

    @property
    def soul(self) -> "SuperNumber":
        return SuperNumber(self.q, {m: c for m, c in self.coeffs.items() if m})

    @property
    def parity(self) -> Parity:
        grades = {popcount(m) & 1 for m in self.coeffs}
        if not grades:
            return Parity.EVEN
        if len(grades) == 2:
            return Parity.MIXED
        return Parity(grades.pop())

    def is_even(self) -> bool:
        return self.parity is Parity.EVEN

    def is_odd(self) -> bool:
        return self.parity is Parity.ODD and bool(self.coeffs)

    def is_zero(self) -> bool:
        return not self.coeffs

    def part(self, parity: Parity) -> "SuperNumber":
        return SuperNumber(self.q, {m: c for m, c in self.coeffs.items()
                                    if popcount(m) % 2 == parity.value})

    def top(self) -> E.Expr:
        """Coefficient of ``xi_1 ... xi_q``."""
        return self[(1 << self.q) - 1]

    @property
    def free_vars(self) -> frozenset:
        out = frozenset()
        for c in self.coeffs.values():
            out |= c.free_vars
        return out

    def map(self, fn) -> "SuperNumber":
        return SuperNumber(self.q, {m: fn(c) for m, c in self.coeffs.items()})

    def substitute(self, mapping: dict) -> "SuperNumber":
        return self.map(lambda c: E.substitute(c, mapping))

    def evaluate(self, point: dict, memo: dict | None = None) -> dict:
        """Numeric coefficients ``{mask: value}`` at ``point``."""
        memo = {} if memo is None else memo
        return {m: E.evaluate(c, point, memo) for m, c in self.coeffs.items()}

    def equals(self, other: "SuperNumber", variables=None, **kw) -> bool:
        """Coefficientwise equality by randomized evaluation."""
        other = _coerce(other, self.q)
        for m in set(self.coeffs) | set(other.coeffs):
            if not E.equivalent(self[m], other[m], variables=variables, **kw):
                return False
        return True

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = _coerce(other, self.q)
        out = dict(self.coeffs)
        for m, c in other.coeffs.items():
            out[m] = E.add(out[m], c) if m in out else c
        return SuperNumber(self.q, out)

    __radd__ = __add__

    def __neg__(self):
        return self.map(lambda c: E.mul(E.const(-1), c))

    def __sub__(self, other):
        return self + (-_coerce(other, self.q))

    def __rsub__(self, other):
        return _coerce(other, self.q) - self

    def __mul__(self, other):
        return mul(self, _coerce(other, self.q))

    def __rmul__(self, other):
        return mul(_coerce(other, self.q), self)

    def __pow__(self, k: int):
        if k < 0:
            return invert_even(self) ** (-k)
        out = scalar(self.q, 1)
        for _ in range(k):
            out = out * self
        return out

    def __truediv__(self, other):
        return self * invert_even(_coerce(other, self.q))

    def __repr__(self):
        return f"SuperNumber(q={self.q}, {self})"

    def __str__(self):
        if not self.coeffs:
            return "0"
        parts = []
        for m, c in self:
            mono = "*".join(f"xi{j + 1}" for j in range(self.q) if m >> j & 1)
            if not mono:
                parts.append(str(c))
            elif c is E.ONE:
                parts.append(mono)
            else:
                parts.append(f"({c})*{mono}")
        return " + ".join(parts)


def _coerce(x, q) -> SuperNumber:
    if isinstance(x, SuperNumber):
        if x.q != q:
            raise MismatchedGeneratorCount(f"q={x.q} vs q={q}")
        return x
    return SuperNumber(q, {0: E.as_expr(x)})


def scalar(q: int, value) -> SuperNumber:
    """Even element with only a body."""
    return SuperNumber(q, {0: E.as_expr(value)})


def generator(q: int, j: int) -> SuperNumber:
    """The odd generator ``xi_j`` (1-based)."""
    if not 1 <= j <= q:
        raise IndexOutOfRange(f"generator xi{j} with q={q}")
    return SuperNumber(q, {1 << (j - 1): E.ONE})


def mul(a: SuperNumber, b: SuperNumber) -> SuperNumber:
    if a.q != b.q:
        raise MismatchedGeneratorCount(f"q={a.q} vs q={b.q}")
    acc: dict = {}
    for ma, ca in a.coeffs.items():
        for mb, cb in b.coeffs.items():
            if ma & mb:
                continue
            s = reorder_sign(ma, mb)
            t = E.mul(ca, cb) if s > 0 else E.mul(E.const(-1), ca, cb)
            acc.setdefault(ma | mb, []).append(t)
    return SuperNumber(a.q, {m: E.add(*ts) for m, ts in acc.items()})


def _require_even(a: SuperNumber, what: str):
    if not a.is_even():
        raise NotEven(f"{what} must be even, got parity {a.parity.name.lower()}")


def invert_even(a: SuperNumber) -> SuperNumber:
    """Inverse of an even element via the finite Neumann series in the soul."""
    _require_even(a, "invert_even argument")
    b = a.body
    if b.is_const(0):
        raise ZeroBody("element with zero body is not invertible")
    binv = E.power(b, -1)
    n = a.soul * scalar(a.q, binv)
    out = scalar(a.q, 1)
    term = scalar(a.q, 1)
    for k in range(1, a.q // 2 + 1):
        term = term * (-n)
        if term.is_zero():
            break
        out = out + term
    return out * scalar(a.q, binv)


def compose_scalar(g, args: dict) -> SuperNumber:
    """Smooth function ``g`` evaluated on even super numbers.

    Parameters
    ----------
    g : Expr
        Scalar expression.
    args : dict
        Map from variable name of ``g`` to an even :class:`SuperNumber`.
        Free variables of ``g`` that are not keys are left untouched.

    Returns
    -------
    SuperNumber
        ``sum_alpha (1/alpha!) d^alpha g(bodies) souls^alpha``, truncated at
        total order ``q // 2``; exact because the souls are nilpotent.
    """
    g = E.as_expr(g)
    if not args:
        raise ValueError("compose_scalar needs at least one argument")
    qs = {a.q for a in args.values()}
    if len(qs) != 1:
        raise MismatchedGeneratorCount("arguments have different q")
    q = qs.pop()
    for name, a in args.items():
        _require_even(a, f"argument {name!r}")
    # identity substitutions (body u_i for argument u_i) are skipped
    bodies = {name: a.body for name, a in args.items() if a.body is not E.var(name)}
    souls = [(name, a.soul) for name, a in args.items() if not a.soul.is_zero()]
    cap = q // 2
    out: dict = {}

    def rec(k, expr_, mono: SuperNumber, order, fact):
        if k == len(souls):
            c = E.mul(E.const(1.0 / fact), E.substitute(expr_, bodies) if bodies else expr_)
            for m, mc in mono.coeffs.items():
                out.setdefault(m, []).append(E.mul(c, mc))
            return
        name, s = souls[k]
        d = expr_
        power_ = mono
        a = 0
        while True:
            rec(k + 1, d, power_, order + a, fact * math.factorial(a))
            if order + a >= cap:
                break
            power_ = power_ * s
            if power_.is_zero():
                break
            d = E.diff(d, name)
            a += 1
            if d is E.ZERO:
                break

    rec(0, g, scalar(q, 1), 0, 1)
    return SuperNumber(q, {m: E.add(*ts) for m, ts in out.items()})


def superderivative(f: SuperNumber, i: int, chart) -> SuperNumber:
    """Derivative along the ``i``-th standard coordinate (1-based).

    ``chart`` is a chart object with a ``variables`` attribute or a plain
    sequence of the even variable names. Indices ``1..p`` are even
    coordinates, ``p+1..p+q`` the odd generators.
    """
    names = list(getattr(chart, "variables", chart))
    p = len(names)
    if not 1 <= i <= p + f.q:
        raise IndexOutOfRange(f"coordinate index {i} outside 1..{p + f.q}")
    if i <= p:
        return f.map(lambda c: E.diff(c, names[i - 1]))
    bit = 1 << (i - p - 1)
    below = bit - 1
    out = {}
    for m, c in f.coeffs.items():
        if m & bit:
            c = c if popcount(m & below) % 2 == 0 else E.mul(E.const(-1), c)
            out[m ^ bit] = c
    return SuperNumber(f.q, out)


def evaluate_many(items, point) -> list:
    """Evaluate several super numbers sharing one memo."""
    memo: dict = {}
    return [x.evaluate(point, memo) for x in items]


def numeric_mul(a: dict, b: dict, shape=()) -> dict:
    """Product of numerically evaluated super numbers ``{mask: array}``."""
    out: dict = {}
    for ma, va in a.items():
        for mb, vb in b.items():
            if ma & mb:
                continue
            t = reorder_sign(ma, mb) * np.asarray(va) * np.asarray(vb)
            out[ma | mb] = out[ma | mb] + t if (ma | mb) in out else t
    return out
