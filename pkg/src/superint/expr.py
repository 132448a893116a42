"""Symbolic scalar expressions in named real variables.

Expressions are immutable, hash-consed trees: two structurally equal
expressions built anywhere in the process are the same object, so equality
and hashing are identity based and shared subtrees are evaluated once.

Only light simplification is performed at construction time (constant
folding, absorption of 0 and 1, collection of like terms and merging of
powers of a common base). Equality of transcendental trees is decided
numerically, see :func:`equivalent`.
"""

from __future__ import annotations

import math
import weakref
import zlib
from fractions import Fraction
from numbers import Number as _Number

import numpy as np
from numpy.polynomial import Polynomial

from .errors import DomainError, UnboundVariable

__all__ = [
    "Expr",
    "const",
    "var",
    "add",
    "mul",
    "power",
    "sqrt",
    "sin",
    "cos",
    "exp",
    "log",
    "atan2",
    "bump",
    "as_expr",
    "diff",
    "taylor",
    "substitute",
    "evaluate",
    "equivalent",
    "ZERO",
    "ONE",
]

_TABLE: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


def _intern(cls, key, init, h):
    node = _TABLE.get(key)
    if node is None:
        node = object.__new__(cls)
        init(node)
        node._key = key
        node._h = h
        node._dcache = {}
        node._fv = None
        _TABLE[key] = node
    return node


def _name_hash(name: str) -> int:
    # str hashes are salted per process; keep ordering reproducible
    return zlib.crc32(name.encode())


def _order_key(e):
    return e._h


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ("_key", "_h", "_dcache", "_fv", "__weakref__")

    # arithmetic sugar; the right operand may be a plain number
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, mul(const(-1), as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), mul(const(-1), self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return mul(self, power(as_expr(other), -1))

    def __rtruediv__(self, other):
        return mul(as_expr(other), power(self, -1))

    def __neg__(self):
        return mul(const(-1), self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __call__(self, **point):
        return evaluate(self, point)

    def __repr__(self):
        return f"Expr({self})"

    @property
    def free_vars(self) -> frozenset:
        if self._fv is None:
            out = set()
            for c in self.children():
                out |= c.free_vars
            self._fv = frozenset(out)
        return self._fv

    def children(self):
        return ()

    def is_const(self, value=None):
        return False

    def precedence(self):
        return 4


class Const(Expr):
    __slots__ = ("value",)

    def is_const(self, value=None):
        return value is None or self.value == value

    def __str__(self):
        v = self.value
        if float(v).is_integer():
            return str(int(v))
        return repr(float(v))

    def precedence(self):
        return 1 if self.value < 0 else 4


class Var(Expr):
    __slots__ = ("name",)

    @property
    def free_vars(self):
        return frozenset((self.name,))

    def __str__(self):
        return self.name


class Add(Expr):
    __slots__ = ("terms",)

    def children(self):
        return self.terms

    def precedence(self):
        return 1

    def __str__(self):
        out = str(self.terms[0])
        for t in self.terms[1:]:
            s = _paren(t, 1)
            if s.startswith("-"):
                out += " - " + s[1:]
            else:
                out += " + " + s
        return out


class Mul(Expr):
    __slots__ = ("factors",)

    def children(self):
        return self.factors

    def precedence(self):
        return 2

    def __str__(self):
        fs = self.factors
        if fs[0].is_const(-1) and len(fs) > 1:
            return "-" + "*".join(_paren(f, 2) for f in fs[1:])
        return "*".join(_paren(f, 2) for f in fs)


class Pow(Expr):
    __slots__ = ("base", "exponent")

    def children(self):
        return (self.base,)

    def precedence(self):
        return 3

    def __str__(self):
        if self.exponent == Fraction(1, 2):
            return f"sqrt({self.base})"
        e = self.exponent
        es = str(e) if e.denominator == 1 and e > 0 else f"({e})"
        return f"{_paren(self.base, 4)}^{es}"


class Func(Expr):
    __slots__ = ("name", "arg")

    def children(self):
        return (self.arg,)

    def __str__(self):
        return f"{self.name}({self.arg})"


class Atan2(Expr):
    __slots__ = ("y", "x")

    def children(self):
        return (self.y, self.x)

    def __str__(self):
        return f"atan2({self.y}, {self.x})"


class Bump(Expr):
    """k-th derivative of phi(s) = exp(1 - 1/(1 - s)) for s < 1, 0 otherwise."""

    __slots__ = ("order", "arg")

    def children(self):
        return (self.arg,)

    def __str__(self):
        if self.order == 0:
            return f"bumpfn({self.arg})"
        return f"bumpfn[{self.order}]({self.arg})"


def _paren(e, prec):
    s = str(e)
    return f"({s})" if e.precedence() < prec else s


# --------------------------------------------------------------------------
# constructors


def const(value) -> Expr:
    value = float(value)
    if value == 0.0:
        value = 0.0  # normalise -0.0

    def init(n):
        n.value = value

    return _intern(Const, ("c", value), init, hash((1, value)))


def var(name: str) -> Expr:
    def init(n):
        n.name = name

    return _intern(Var, ("v", name), init, hash((2, _name_hash(name))))


ZERO = const(0)
ONE = const(1)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (_Number, np.floating, np.integer)):
        return const(x)
    if isinstance(x, str):
        return var(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def _split_coeff(t: Expr):
    if isinstance(t, Const):
        return t.value, ONE
    if isinstance(t, Mul) and isinstance(t.factors[0], Const):
        rest = t.factors[1:]
        return t.factors[0].value, rest[0] if len(rest) == 1 else _make_mul(rest)
    return 1.0, t


def _make_add(terms):
    def init(n):
        n.terms = terms

    return _intern(Add, ("+",) + tuple(id(t) for t in terms), init,
                   hash((3,) + tuple(t._h for t in terms)))


def _make_mul(factors):
    def init(n):
        n.factors = factors

    return _intern(Mul, ("*",) + tuple(id(f) for f in factors), init,
                   hash((4,) + tuple(f._h for f in factors)))


def add(*terms) -> Expr:
    flat = []
    for t in terms:
        t = as_expr(t)
        if isinstance(t, Add):
            flat.extend(t.terms)
        else:
            flat.append(t)
    total = 0.0
    coeffs: dict = {}
    for t in flat:
        c, rest = _split_coeff(t)
        if rest is ONE:
            total += c
        else:
            coeffs[rest] = coeffs.get(rest, 0.0) + c
    out = []
    for rest, c in coeffs.items():
        if c == 0.0:
            continue
        out.append(rest if c == 1.0 else mul(const(c), rest))
    out.sort(key=_order_key)
    if total != 0.0:
        out.insert(0, const(total))
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    return _make_add(tuple(out))


def mul(*factors) -> Expr:
    flat = []
    for f in factors:
        f = as_expr(f)
        if isinstance(f, Mul):
            flat.extend(f.factors)
        else:
            flat.append(f)
    c = 1.0
    powers: dict = {}
    for f in flat:
        if isinstance(f, Const):
            c *= f.value
            continue
        # plain ints for the common case; Fraction only from Pow nodes
        if isinstance(f, Pow):
            base, e = f.base, f.exponent
        else:
            base, e = f, 1
        prev = powers.get(base)
        powers[base] = e if prev is None else prev + e
    if c == 0.0:
        return ZERO
    out = []
    for base, e in powers.items():
        if e == 0:
            continue
        out.append(base if e == 1 else power(base, e))
    # power() may have folded a factor into a constant
    rest = []
    for f in out:
        if isinstance(f, Const):
            c *= f.value
        else:
            rest.append(f)
    if c == 0.0:
        return ZERO
    rest.sort(key=_order_key)
    if c != 1.0 and len(rest) == 1 and isinstance(rest[0], Add):
        # distribute scalars over sums so that negated sums cancel
        return add(*[mul(const(c), t) for t in rest[0].terms])
    if c != 1.0 or not rest:
        rest.insert(0, const(c))
    if len(rest) == 1:
        return rest[0]
    return _make_mul(tuple(rest))


def _as_fraction(e) -> Fraction:
    if isinstance(e, Fraction):
        return e
    if isinstance(e, (int, np.integer)):
        return Fraction(int(e))
    if isinstance(e, Const):
        e = e.value
    f = Fraction(e).limit_denominator(10**6)
    if abs(float(f) - float(e)) > 1e-12:
        raise ValueError(f"exponent {e!r} is not rational")
    return f


def power(base, exponent) -> Expr:
    base = as_expr(base)
    e = _as_fraction(exponent)
    if e == 0:
        return ONE
    if e == 1:
        return base
    if isinstance(base, Const):
        b = base.value
        if e.denominator == 1:
            if b == 0 and e < 0:
                raise DomainError("0 raised to a negative power")
            return const(b ** int(e))
        if b > 0:
            return const(b ** float(e))
    if isinstance(base, Pow) and e.denominator == 1:
        return power(base.base, base.exponent * e)
    if isinstance(base, Mul) and e.denominator == 1:
        return mul(*[power(f, e) for f in base.factors])

    def init(n):
        n.base = base
        n.exponent = e

    return _intern(Pow, ("^", id(base), e), init, hash((5, base._h, e)))


def sqrt(x) -> Expr:
    return power(x, Fraction(1, 2))


def _func(name, x, fold):
    x = as_expr(x)
    if isinstance(x, Const):
        return const(fold(x.value))

    def init(n):
        n.name = name
        n.arg = x

    return _intern(Func, (name, id(x)), init, hash((6, _name_hash(name), x._h)))


def sin(x):
    return _func("sin", x, math.sin)


def cos(x):
    return _func("cos", x, math.cos)


def exp(x):
    return _func("exp", x, math.exp)


def _log_fold(v):
    if v <= 0:
        raise DomainError(f"log of nonpositive constant {v}")
    return math.log(v)


def log(x):
    return _func("log", x, _log_fold)


def atan2(y, x) -> Expr:
    y, x = as_expr(y), as_expr(x)
    if isinstance(y, Const) and isinstance(x, Const):
        return const(math.atan2(y.value, x.value))

    def init(n):
        n.y = y
        n.x = x

    return _intern(Atan2, ("atan2", id(y), id(x)), init, hash((7, y._h, x._h)))


def bump_fn(s, order: int = 0) -> Expr:
    s = as_expr(s)

    def init(n):
        n.order = order
        n.arg = s

    return _intern(Bump, ("bump", order, id(s)), init, hash((8, order, s._h)))


def bump(variables, center, radius) -> Expr:
    """Smooth bump equal to 1 at ``center`` and identically 0 outside ``radius``.

    ``exp(1 - 1/(1 - r^2/R^2))`` inside the ball, 0 outside, where ``r`` is
    the Euclidean distance to the center.
    """
    if len(variables) != len(center):
        raise ValueError("center must have one entry per variable")
    r2 = add(*[power(add(as_expr(v), const(-c)), 2) for v, c in zip(variables, center)])
    return bump_fn(mul(r2, const(1.0 / radius**2)))


# --------------------------------------------------------------------------
# calculus


def _bump_poly(k: int) -> Polynomial:
    # phi^(k)(s) = phi(s) * Q_k(t) with t = 1/(1-s); dt/ds = t^2
    q = Polynomial([1.0])
    t2 = Polynomial([0.0, 0.0, 1.0])
    for _ in range(k):
        q = t2 * (q.deriv() - q)
    return q


_BUMP_POLYS: dict = {}


def diff(e: Expr, name: str) -> Expr:
    """Partial derivative of ``e`` with respect to the variable ``name``."""
    e = as_expr(e)
    if name not in e.free_vars:
        return ZERO
    cached = e._dcache.get(name)
    if cached is not None:
        return cached
    if isinstance(e, Var):
        d = ONE
    elif isinstance(e, Add):
        d = add(*[diff(t, name) for t in e.terms])
    elif isinstance(e, Mul):
        fs = e.factors
        parts = []
        for i, f in enumerate(fs):
            df = diff(f, name)
            if df is ZERO:
                continue
            parts.append(mul(*fs[:i], df, *fs[i + 1 :]))
        d = add(*parts)
    elif isinstance(e, Pow):
        d = mul(const(float(e.exponent)), power(e.base, e.exponent - 1), diff(e.base, name))
    elif isinstance(e, Func):
        a = e.arg
        da = diff(a, name)
        if e.name == "sin":
            d = mul(cos(a), da)
        elif e.name == "cos":
            d = mul(const(-1), sin(a), da)
        elif e.name == "exp":
            d = mul(e, da)
        elif e.name == "log":
            d = mul(power(a, -1), da)
        else:  # pragma: no cover
            raise NotImplementedError(e.name)
    elif isinstance(e, Atan2):
        y, x = e.y, e.x
        num = add(mul(x, diff(y, name)), mul(const(-1), y, diff(x, name)))
        d = mul(num, power(add(power(x, 2), power(y, 2)), -1))
    elif isinstance(e, Bump):
        d = mul(bump_fn(e.arg, e.order + 1), diff(e.arg, name))
    else:  # pragma: no cover
        raise TypeError(type(e))
    e._dcache[name] = d
    return d


def taylor(e: Expr, name: str, order: int) -> list:
    """Coefficients ``[e, e', e''/2!, ..., e^(k)/k!]`` in the variable ``name``."""
    if order < 0:
        raise ValueError("order must be nonnegative")
    out = [as_expr(e)]
    d = out[0]
    for k in range(1, order + 1):
        d = diff(d, name)
        out.append(mul(const(1.0 / math.factorial(k)), d))
    return out


def substitute(e: Expr, mapping: dict) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    mapping = {k: as_expr(v) for k, v in mapping.items()}
    if not mapping:
        return e
    memo: dict = {}

    def go(n):
        if not (n.free_vars & mapping.keys()):
            return n
        r = memo.get(id(n))
        if r is not None:
            return r
        if isinstance(n, Var):
            r = mapping[n.name]
        elif isinstance(n, Add):
            r = add(*[go(t) for t in n.terms])
        elif isinstance(n, Mul):
            r = mul(*[go(f) for f in n.factors])
        elif isinstance(n, Pow):
            r = power(go(n.base), n.exponent)
        elif isinstance(n, Func):
            r = _func(n.name, go(n.arg), _FOLDS[n.name])
        elif isinstance(n, Atan2):
            r = atan2(go(n.y), go(n.x))
        elif isinstance(n, Bump):
            r = bump_fn(go(n.arg), n.order)
        else:  # pragma: no cover
            raise TypeError(type(n))
        memo[id(n)] = r
        return r

    return go(as_expr(e))


_FOLDS = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "log": _log_fold}


# --------------------------------------------------------------------------
# numerics


def evaluate(e: Expr, point: dict, memo: dict | None = None):
    """Evaluate ``e`` at ``point`` (name -> float or numpy array).

    Arrays broadcast; the result is a float or an ndarray. ``memo`` may be
    shared between calls on the same point to reuse common subtrees.
    """
    if memo is None:
        memo = {}
    return _eval(as_expr(e), point, memo)


def _eval(n, point, memo):
    key = id(n)
    if key in memo:
        return memo[key]
    if isinstance(n, Const):
        v = n.value
    elif isinstance(n, Var):
        try:
            v = point[n.name]
        except KeyError:
            raise UnboundVariable(n.name) from None
    elif isinstance(n, Add):
        v = _eval(n.terms[0], point, memo)
        for t in n.terms[1:]:
            v = v + _eval(t, point, memo)
    elif isinstance(n, Mul):
        v = _eval(n.factors[0], point, memo)
        for f in n.factors[1:]:
            v = v * _eval(f, point, memo)
    elif isinstance(n, Pow):
        b = np.asarray(_eval(n.base, point, memo), dtype=float)
        e = n.exponent
        if e < 0 and np.any(b == 0):
            raise DomainError(f"division by zero in {n}")
        if e.denominator != 1 and np.any(b < 0):
            raise DomainError(f"fractional power of a negative number in {n}")
        if e.denominator == 1:
            v = b ** int(e) if e > 0 else 1.0 / b ** int(-e)
        elif e == Fraction(1, 2):
            v = np.sqrt(b)
        elif e == Fraction(-1, 2):
            v = 1.0 / np.sqrt(b)
        else:
            v = b ** float(e)
    elif isinstance(n, Func):
        a = np.asarray(_eval(n.arg, point, memo), dtype=float)
        if n.name == "sin":
            v = np.sin(a)
        elif n.name == "cos":
            v = np.cos(a)
        elif n.name == "exp":
            v = np.exp(a)
        else:
            if np.any(a <= 0):
                raise DomainError(f"log of a nonpositive value in {n}")
            v = np.log(a)
    elif isinstance(n, Atan2):
        y = np.asarray(_eval(n.y, point, memo), dtype=float)
        x = np.asarray(_eval(n.x, point, memo), dtype=float)
        if np.any((x == 0) & (y == 0)):
            raise DomainError("atan2(0, 0)")
        v = np.arctan2(y, x)
    elif isinstance(n, Bump):
        v = _eval_bump(n.order, np.asarray(_eval(n.arg, point, memo), dtype=float))
    else:  # pragma: no cover
        raise TypeError(type(n))
    if isinstance(v, np.ndarray) and v.ndim == 0:
        v = float(v)
    memo[key] = v
    return v


def _eval_bump(order, s):
    poly = _BUMP_POLYS.get(order)
    if poly is None:
        poly = _BUMP_POLYS[order] = _bump_poly(order)
    s = np.asarray(s, dtype=float)
    inside = s < 1.0
    out = np.zeros_like(s)
    if np.any(inside):
        t = 1.0 / (1.0 - s[inside])
        # exp(1 - t) underflows long before the polynomial overflows
        ok = t < 700.0
        val = np.zeros_like(t)
        tt = t[ok]
        val[ok] = np.exp(1.0 - tt) * poly(tt)
        out[inside] = val
    return out


def equivalent(a: Expr, b: Expr, variables=None, n: int = 20, rtol: float = 1e-10,
               low: float = 0.1, high: float = 0.9, seed: int = 0) -> bool:
    """Decide ``a == b`` by evaluation at ``n`` pseudo-random points."""
    a, b = as_expr(a), as_expr(b)
    names = sorted(variables if variables is not None else (a.free_vars | b.free_vars))
    rng = np.random.default_rng(seed)
    pts = {name: rng.uniform(low, high, size=n) for name in names}
    va = np.broadcast_to(evaluate(a, pts), (n,))
    vb = np.broadcast_to(evaluate(b, pts), (n,))
    scale = np.maximum(1.0, np.maximum(np.abs(va), np.abs(vb)))
    return bool(np.all(np.abs(va - vb) <= rtol * scale))
