"""Supermatrices, Berezinians, Berezin densities and differential operators.

A :class:`BerezinDensity` ``f |Dx|`` stores its left coefficient ``f`` in the
chart's standard coordinates together with the frame ``x`` that the symbol
``|Dx|`` refers to. Frames are :class:`~superint.chart.CoordinateSystem`
objects; ``None`` means the standard frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from itertools import product

import numpy as np

from . import expr as E
from .chart import Chart, CoordinateSystem, Retraction, decompose, expr_det, expr_matrix_inverse
from .chart import pullback_fn
from .errors import NotDerivation, NotEven, ParityError, SignAmbiguous, SingularV
from .grassmann import Parity, SuperNumber, invert_even, scalar, superderivative

__all__ = [
    "Convention",
    "DEFAULT",
    "SuperMatrix",
    "ber",
    "abs_ber",
    "det_even",
    "jacobian_matrix",
    "jacobian_ber",
    "BerezinDensity",
    "DiffOp",
    "frame_of",
    "frame_derivative",
    "transform_density",
    "fibre_integral",
    "lie_derivative",
    "act",
    "morphism_as_diffop",
    "pullback_density",
    "body_sign",
]


# --------------------------------------------------------------------------
# conventions


@dataclass(frozen=True)
class Convention:
    """Sign conventions ``s(p, q)`` for integrals and ``b(p, q)`` for ``|Dx|``.

    ``s`` is one of ``"default"`` (``pq + q(q-1)/2``), ``"half-q"``
    (``q(q-1)/2``) or ``"pq-only"`` (``pq``); ``b`` is ``"default"``
    (``p + q``) or ``"q"``.
    """

    s_rule: str = "default"
    b_rule: str = "default"

    def __post_init__(self):
        if self.s_rule not in ("default", "half-q", "pq-only"):
            raise ValueError(f"unknown s convention {self.s_rule!r}")
        if self.b_rule not in ("default", "q"):
            raise ValueError(f"unknown b convention {self.b_rule!r}")

    def s(self, p: int, q: int) -> int:
        if self.s_rule == "default":
            return (p * q + q * (q - 1) // 2) % 2
        if self.s_rule == "half-q":
            return (q * (q - 1) // 2) % 2
        return (p * q) % 2

    def b(self, p: int, q: int) -> int:
        return (p + q) % 2 if self.b_rule == "default" else q % 2

    def sign_s(self, p, q) -> int:
        return -1 if self.s(p, q) else 1


DEFAULT = Convention()


# --------------------------------------------------------------------------
# matrices with super number entries


def _zero(q):
    return SuperNumber(q)


def mat_mul(a, b, q):
    n, m, k = len(a), len(b), len(b[0]) if b else 0
    out = []
    for i in range(n):
        row = []
        for j in range(k):
            acc = _zero(q)
            for l in range(m):
                x, y = a[i][l], b[l][j]
                if x.is_zero() or y.is_zero():
                    continue
                acc = acc + x * y
            row.append(acc)
        out.append(row)
    return out


def mat_add(a, b):
    return [[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def mat_neg(a):
    return [[-x for x in r] for r in a]


def mat_identity(n, q):
    return [[scalar(q, 1) if i == j else _zero(q) for j in range(n)] for i in range(n)]


def _body_matrix(a):
    return [[x.body for x in r] for r in a]


def inverse_even(a, q):
    """Inverse of a square matrix with even entries (finite Neumann series)."""
    n = len(a)
    if n == 0:
        return []
    b = _body_matrix(a)
    binv_e, det = expr_matrix_inverse(b)
    if det.is_const(0):
        raise SingularV("body of the matrix is singular")
    binv = [[scalar(q, c) for c in r] for r in binv_e]
    soul = [[x.soul for x in r] for r in a]
    if all(x.is_zero() for r in soul for x in r):
        return binv
    n_ = mat_neg(mat_mul(binv, soul, q))
    out = mat_identity(n, q)
    term = mat_identity(n, q)
    for _ in range(q // 2):
        term = mat_mul(term, n_, q)
        out = mat_add(out, term)
    return mat_mul(out, binv, q)


def det_even(a, q) -> SuperNumber:
    """Determinant of an even matrix: ``det(A_body) exp(tr log(1 + N))``."""
    n = len(a)
    if n == 0:
        return scalar(q, 1)
    for r in a:
        for x in r:
            if not x.is_even():
                raise NotEven("det_even needs even entries")
    b = _body_matrix(a)
    d0 = scalar(q, expr_det(b))
    soul = [[x.soul for x in r] for r in a]
    if all(x.is_zero() for r in soul for x in r):
        return d0
    binv_e, det = expr_matrix_inverse(b)
    binv = [[scalar(q, c) for c in r] for r in binv_e]
    nmat = mat_mul(binv, soul, q)
    kmax = q // 2
    # t = tr log(1 + N); nilpotent, so both series terminate
    t = _zero(q)
    power_ = mat_identity(n, q)
    for k in range(1, kmax + 1):
        power_ = mat_mul(power_, nmat, q)
        tr = reduce(lambda x, y: x + y, (power_[i][i] for i in range(n)), _zero(q))
        t = t + tr * scalar(q, (-1) ** (k + 1) / k)
    ex = scalar(q, 1)
    tk = scalar(q, 1)
    for k in range(1, kmax + 1):
        tk = tk * t
        if tk.is_zero():
            break
        ex = ex + tk * scalar(q, 1.0 / math.factorial(k))
    return d0 * ex


class SuperMatrix:
    """Even supermatrix ``[[R, S], [T, V]]`` with ``p`` even and ``q`` odd rows/columns.

    ``entries`` is a ``(p+q) x (p+q)`` nested list of super numbers over
    ``ngen`` generators.
    """

    def __init__(self, p: int, q: int, entries, ngen: int | None = None):
        n = p + q
        if len(entries) != n or any(len(r) != n for r in entries):
            raise ValueError("supermatrix must be square of size p+q")
        ngen = entries[0][0].q if n and ngen is None else (ngen or 0)
        ent = [[x if isinstance(x, SuperNumber) else scalar(ngen, x) for x in r] for r in entries]
        for i in range(n):
            for j in range(n):
                want = Parity.EVEN if (i < p) == (j < p) else Parity.ODD
                x = ent[i][j]
                if x.is_zero():
                    continue
                if x.parity is not want:
                    raise ParityError(f"entry ({i + 1},{j + 1}) should be {want.name.lower()}")
        self.p, self.q, self.ngen = p, q, ngen
        self.entries = ent

    @property
    def R(self):
        return [r[: self.p] for r in self.entries[: self.p]]

    @property
    def S(self):
        return [r[self.p:] for r in self.entries[: self.p]]

    @property
    def T(self):
        return [r[: self.p] for r in self.entries[self.p:]]

    @property
    def V(self):
        return [r[self.p:] for r in self.entries[self.p:]]

    def __matmul__(self, other: "SuperMatrix") -> "SuperMatrix":
        return SuperMatrix(self.p, self.q, mat_mul(self.entries, other.entries, self.ngen), self.ngen)

    @classmethod
    def identity(cls, p, q, ngen):
        return cls(p, q, mat_identity(p + q, ngen), ngen)

    def inverse(self) -> "SuperMatrix":
        """Block inverse through the Schur complement of ``V``."""
        g = self.ngen
        R, S, T, V = self.R, self.S, self.T, self.V
        vinv = inverse_even(V, g)
        if self.p == 0:
            return SuperMatrix(0, self.q, vinv, g)
        a = mat_add(R, mat_neg(mat_mul(mat_mul(S, vinv, g), T, g))) if self.q else R
        ainv = inverse_even(a, g)
        if self.q == 0:
            return SuperMatrix(self.p, 0, ainv, g)
        sv = mat_mul(S, vinv, g)
        vt = mat_mul(vinv, T, g)
        top_right = mat_neg(mat_mul(ainv, sv, g))
        bottom_left = mat_neg(mat_mul(vt, ainv, g))
        bottom_right = mat_add(vinv, mat_mul(mat_mul(vt, ainv, g), sv, g))
        rows = [ra + rb for ra, rb in zip(ainv, top_right)]
        rows += [ra + rb for ra, rb in zip(bottom_left, bottom_right)]
        return SuperMatrix(self.p, self.q, rows, g)

    def body_det_R(self) -> E.Expr:
        return expr_det(_body_matrix(self.R))

    def __repr__(self):
        return f"SuperMatrix(p={self.p}, q={self.q})"


def ber(m: SuperMatrix) -> SuperNumber:
    """Berezinian ``det(R - S V^-1 T) det(V)^-1``."""
    g = m.ngen
    V = m.V
    if m.q and expr_det(_body_matrix(V)).is_const(0):
        raise SingularV("odd-odd block has singular body")
    if m.q == 0:
        return det_even(m.R, g)
    vinv = inverse_even(V, g)
    a = mat_add(m.R, mat_neg(mat_mul(mat_mul(m.S, vinv, g), m.T, g))) if m.p else []
    return det_even(a, g) * invert_even(det_even(V, g))


def body_sign(det: E.Expr, chart: Chart | None = None, n: int = 64) -> int:
    """Sign of a body determinant, sampled over the chart region."""
    if isinstance(det, E.Const):
        if det.value == 0:
            raise SignAmbiguous("body determinant is identically zero")
        return 1 if det.value > 0 else -1
    if chart is None:
        raise SignAmbiguous("non-constant body determinant needs a chart to sample")
    pts = chart.sample_points(n, seed=7)
    vals = np.atleast_1d(E.evaluate(det, pts))
    pos, neg = np.any(vals > 0), np.any(vals < 0)
    if pos == neg:
        raise SignAmbiguous("body determinant changes sign or vanishes on the region")
    return 1 if pos else -1


def abs_ber(m: SuperMatrix, chart: Chart | None = None) -> SuperNumber:
    """``sgn(det R_body) * Ber(m)``."""
    return ber(m) * scalar(m.ngen, body_sign(m.body_det_R(), chart))


# --------------------------------------------------------------------------
# frames and Jacobians


def frame_of(gamma: Retraction) -> CoordinateSystem:
    """Coordinate system ``(gamma*(u_0), xi)`` whose associated retraction is ``gamma``."""
    fr = getattr(gamma, "_frame", None)
    if fr is None:
        ch = gamma.chart
        odd = [ch.coordinate(ch.p + j) for j in range(1, ch.q + 1)]
        fr = CoordinateSystem(ch, list(gamma.images) + odd, names=ch.variables, name="g")
        gamma._frame = fr
    return fr


_JAC_CACHE: dict = {}


def _std_jacobian(x: CoordinateSystem) -> SuperMatrix:
    """``M(x/s)`` with entries ``d x_j / d s_i`` (row ``i``: derivative)."""
    key = ("fwd", id(x))
    hit = _JAC_CACHE.get(key)
    if hit is not None and hit[0] is x:
        return hit[1]
    ch = x.source
    n = ch.p + ch.q
    ent = [[superderivative(x.images[j], i + 1, ch) for j in range(n)] for i in range(n)]
    m = SuperMatrix(ch.p, ch.q, ent, ch.q)
    _JAC_CACHE[key] = (x, m)
    return m


def _std_jacobian_inv(x: CoordinateSystem) -> SuperMatrix:
    """``M(s/x)``, giving ``d/dx_i = sum_k M(s/x)_ik d/ds_k``."""
    key = ("inv", id(x))
    hit = _JAC_CACHE.get(key)
    if hit is not None and hit[0] is x:
        return hit[1]
    m = _std_jacobian(x).inverse()
    _JAC_CACHE[key] = (x, m)
    return m


def _is_std(x) -> bool:
    return x is None or getattr(x, "name", None) == "std"


def jacobian_matrix(x: CoordinateSystem, y: CoordinateSystem | None = None) -> SuperMatrix:
    """``M(x/y)`` with entries ``d x_j / d y_i``; ``y`` defaults to the standard frame."""
    mx = _std_jacobian(x)
    if _is_std(y):
        return mx
    return _std_jacobian_inv(y) @ mx


def jacobian_ber(x, y=None, absolute: bool = False) -> SuperNumber:
    """``D x/y`` (or ``|D| x/y`` when ``absolute``); ``None`` means the standard frame."""
    chart = (x or y).source if (x or y) is not None else None
    if _is_std(x) and _is_std(y):
        return scalar(chart.q if chart else 0, 1)
    q = chart.q
    bx = scalar(q, 1) if _is_std(x) else ber(_std_jacobian(x))
    by = scalar(q, 1) if _is_std(y) else ber(_std_jacobian(y))
    out = bx * invert_even(by)
    if absolute:
        sx = 1 if _is_std(x) else body_sign(_std_jacobian(x).body_det_R(), chart)
        sy = 1 if _is_std(y) else body_sign(_std_jacobian(y).body_det_R(), chart)
        out = out * scalar(q, sx * sy)
    return out


def frame_derivative(f: SuperNumber, i: int, frame: CoordinateSystem | None, chart: Chart) -> SuperNumber:
    """Coordinate derivation ``d f / d x_i`` of the frame ``x`` (1-based)."""
    if _is_std(frame):
        return superderivative(f, i, chart)
    minv = _std_jacobian_inv(frame).entries
    out = SuperNumber(chart.q)
    for k in range(chart.p + chart.q):
        c = minv[i - 1][k]
        if c.is_zero():
            continue
        d = superderivative(f, k + 1, chart)
        if not d.is_zero():
            out = out + c * d
    return out


# --------------------------------------------------------------------------
# densities


class BerezinDensity:
    """``f |Dx|`` (``kind="density"``) or ``f Dx`` (``kind="form"``).

    Parameters
    ----------
    chart : Chart
    coeff : SuperNumber
        Left coefficient in standard coordinates.
    frame : CoordinateSystem, optional
        Frame ``x`` of the symbol; ``None`` is the standard frame.
    kind : {"density", "form"}
    convention : Convention
    """

    def __init__(self, chart: Chart, coeff, frame=None, kind: str = "density",
                 convention: Convention = DEFAULT):
        if kind not in ("density", "form"):
            raise ValueError("kind must be 'density' or 'form'")
        if not isinstance(coeff, SuperNumber):
            coeff = chart.lift(coeff)
        self.chart = chart
        self.coeff = coeff
        self.frame = None if _is_std(frame) else frame
        self.kind = kind
        self.convention = convention

    @property
    def symbol_parity(self) -> int:
        return self.convention.b(self.chart.p, self.chart.q)

    @property
    def parity(self) -> Parity:
        par = self.coeff.parity
        if par is Parity.MIXED:
            return par
        return Parity((par.value + self.symbol_parity) % 2)

    def with_coeff(self, coeff) -> "BerezinDensity":
        return BerezinDensity(self.chart, coeff, self.frame, self.kind, self.convention)

    def __add__(self, other: "BerezinDensity"):
        other = transform_density(other, self.frame)
        return self.with_coeff(self.coeff + other.coeff)

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, c) -> "BerezinDensity":
        return self.with_coeff(self.coeff * scalar(self.chart.q, c))

    def lmul(self, h: SuperNumber) -> "BerezinDensity":
        """``h * omega``."""
        return self.with_coeff(h * self.coeff)

    def rmul(self, h: SuperNumber) -> "BerezinDensity":
        """``omega * h = f |Dx| h = (-1)^{|h| b} f h |Dx|``."""
        b = self.symbol_parity
        if b == 0:
            return self.with_coeff(self.coeff * h)
        return self.with_coeff(self.coeff * h.part(Parity.EVEN) - self.coeff * h.part(Parity.ODD))

    def right_coeff(self) -> SuperNumber:
        """``g`` with ``omega = |Dx| g``."""
        return _flip(self.coeff, self.symbol_parity)

    def equals(self, other: "BerezinDensity", **kw) -> bool:
        other = transform_density(other, self.frame)
        return self.coeff.equals(other.coeff, **kw)

    def __repr__(self):
        sym = "|D" if self.kind == "density" else "D"
        fr = "s" if self.frame is None else self.frame.name
        return f"({self.coeff}){sym}{fr}{'|' if self.kind == 'density' else ''}"


def _flip(f: SuperNumber, b: int) -> SuperNumber:
    # (-1)^{|f| b} per parity part
    if b == 0:
        return f
    return f.part(Parity.EVEN) - f.part(Parity.ODD)


def transform_density(omega: BerezinDensity, target) -> BerezinDensity:
    """Rewrite ``f |Dx|`` as ``f |D|(x/y) |Dy|`` for the frame ``y = target``."""
    if _is_std(target):
        target = None
    if omega.frame is target:
        return omega
    d = jacobian_ber(omega.frame, target, absolute=(omega.kind == "density"))
    return BerezinDensity(omega.chart, omega.coeff * d, target, omega.kind, omega.convention)


def fibre_integral(gamma: Retraction, omega: BerezinDensity) -> E.Expr:
    """``gamma_!(omega)`` as the coefficient of ``|du_0|`` on the base."""
    fr = frame_of(gamma)
    w = transform_density(omega, None if gamma.is_canonical() else fr)
    coeffs = decompose(w.coeff, gamma)
    top = coeffs.get((1 << gamma.chart.q) - 1, E.ZERO)
    p, q = gamma.chart.dim
    return E.mul(E.const(omega.convention.sign_s(p, q)), top)


def pullback_density(phi, omega: BerezinDensity) -> BerezinDensity:
    """``phi*(f |Dy|) = phi*(f) |D phi*(y)|`` for an isomorphism ``phi``."""
    src = phi.source
    if omega.frame is None:
        frame_images = phi.images
    else:
        frame_images = [pullback_fn(phi, im) for im in omega.frame.images]
    fr = CoordinateSystem(src, frame_images, names=src.variables, name="pb")
    return BerezinDensity(src, pullback_fn(phi, omega.coeff), fr, omega.kind, omega.convention)


# --------------------------------------------------------------------------
# differential operators


class DiffOp:
    """``sum_j a_j d_x^j`` in the frame ``x`` (``None``: standard frame).

    ``terms`` maps multi-indices of length ``p+q`` (odd entries 0 or 1) to
    coefficient super numbers; ``d_x^j`` applies ``d/dx_1`` first.
    """

    def __init__(self, chart: Chart, terms: dict, frame=None):
        n = chart.p + chart.q
        clean = {}
        for j, a in terms.items():
            j = tuple(int(v) for v in j)
            if len(j) != n or any(v < 0 for v in j):
                raise ValueError(f"bad multi-index {j}")
            if any(v > 1 for v in j[chart.p:]):
                raise ValueError(f"odd multi-index entries must be 0 or 1: {j}")
            if not isinstance(a, SuperNumber):
                a = chart.lift(a)
            if not a.is_zero():
                clean[j] = clean[j] + a if j in clean else a
        self.chart = chart
        self.terms = clean
        self.frame = None if _is_std(frame) else frame

    @classmethod
    def identity(cls, chart):
        return cls(chart, {(0,) * (chart.p + chart.q): scalar(chart.q, 1)})

    @classmethod
    def derivation(cls, chart, coeffs, frame=None):
        """``sum_k c_k d/dx_k`` from a list of ``p+q`` coefficients."""
        n = chart.p + chart.q
        terms = {}
        for k, c in enumerate(coeffs):
            j = [0] * n
            j[k] = 1
            terms[tuple(j)] = c
        return cls(chart, terms, frame)

    def order(self) -> int:
        return max((sum(j) for j in self.terms), default=0)

    def is_derivation(self) -> bool:
        return all(sum(j) == 1 for j in self.terms)

    def apply(self, h: SuperNumber) -> SuperNumber:
        out = SuperNumber(self.chart.q)
        for j, a in self.terms.items():
            out = out + a * _partial(h, j, self.frame, self.chart)
        return out

    def __repr__(self):
        return f"DiffOp({len(self.terms)} terms, order {self.order()})"


def _partial(h: SuperNumber, j, frame, chart) -> SuperNumber:
    out = h
    for k, n in enumerate(j):
        for _ in range(n):
            out = frame_derivative(out, k + 1, frame, chart)
            if out.is_zero():
                return out
    return out


def _coord_parity(chart, k) -> int:
    return 0 if k < chart.p else 1


def lie_derivative(X: DiffOp, omega: BerezinDensity) -> BerezinDensity:
    """``L_X omega`` for a derivation ``X``, computed in the frame of ``X``."""
    if not X.is_derivation():
        raise NotDerivation("Lie derivative needs a first order operator without constant term")
    w = transform_density(omega, X.frame)
    chart = omega.chart
    out = SuperNumber(chart.q)
    for j, c in X.terms.items():
        k = j.index(1)
        xk = _coord_parity(chart, k)
        for par in (Parity.EVEN, Parity.ODD):
            cp = c.part(par)
            if cp.is_zero():
                continue
            t = frame_derivative(cp * w.coeff, k + 1, X.frame, chart)
            out = out - t if (par.value * xk) % 2 else out + t
    return w.with_coeff(out)


def act(omega: BerezinDensity, A: DiffOp) -> BerezinDensity:
    """Right action ``omega . A``, computed in the frame of ``A``."""
    w = transform_density(omega, A.frame)
    chart = omega.chart
    p = chart.p
    b = w.symbol_parity
    g = w.right_coeff()
    acc = SuperNumber(chart.q)
    for j, a in A.terms.items():
        nj = sum(j)
        jodd = sum(j[p:])
        base = nj + jodd * (jodd - 1) // 2
        prod = g * a
        for par in (Parity.EVEN, Parity.ODD):
            part = prod.part(par)
            if part.is_zero():
                continue
            t = _partial(part, j, A.frame, chart)
            sgn = (base + par.value * jodd) % 2
            acc = acc - t if sgn else acc + t
    # back to a left coefficient
    return w.with_coeff(_flip(acc, b))


def morphism_as_diffop(gamma: Retraction, gamma2: Retraction) -> DiffOp:
    """``sum_i (1/i!) (v - u)^i d_u^i`` with ``u = gamma*(u_0)``, ``v = gamma2*(u_0)``."""
    chart = gamma.chart
    q = chart.q
    diffs = [v - u for u, v in zip(gamma.images, gamma2.images)]
    cap = q // 2
    terms = {}
    for i in product(range(cap + 1), repeat=chart.p):
        if sum(i) > cap:
            continue
        c = scalar(q, 1.0 / math.prod(math.factorial(k) for k in i))
        for d, k in zip(diffs, i):
            c = c * d ** k
        if c.is_zero():
            continue
        terms[tuple(i) + (0,) * q] = c
    return DiffOp(chart, terms, None if gamma.is_canonical() else frame_of(gamma))
