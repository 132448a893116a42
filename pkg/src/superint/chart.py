"""Superdomain charts, retractions, morphisms and decompositions.

Every super number lives on a :class:`Chart` and is stored in the chart's
standard coordinates ``(u_1..u_p, xi_1..xi_q)``. Retractions and other
coordinate systems are data attached to the chart; converting between them
is always an explicit operation.
"""

from __future__ import annotations

import numpy as np

from . import expr as E
from .errors import BodyMismatch, MismatchedGeneratorCount, NotInvertible, ParityError
from .grassmann import Parity, SuperNumber, compose_scalar, generator, scalar

__all__ = [
    "Chart",
    "Retraction",
    "Morphism",
    "CoordinateSystem",
    "pullback_fn",
    "decompose",
    "reconstruct",
    "associated_retraction",
    "pullback_retraction",
    "expr_matrix_inverse",
    "expr_det",
]

DET_THRESHOLD = 1e-12


class Chart:
    """A superdomain ``U`` of dimension ``(p, q)``.

    Parameters
    ----------
    p, q : int
        Even and odd dimension.
    variables : sequence of str, optional
        Names of the even standard coordinates, default ``u1..up``. They also
        name the base coordinates ``u_0`` of the underlying domain.
    region : object, optional
        Base region; anything with ``sample_points(n, rng)`` (see
        :class:`superint.quadrature.Region`).
    """

    def __init__(self, p: int, q: int, variables=None, region=None, name: str = "U"):
        if variables is None:
            variables = [f"u{i + 1}" for i in range(p)]
        variables = list(variables)
        if len(variables) != p or len(set(variables)) != p:
            raise ValueError("need p distinct variable names")
        self.p, self.q = p, q
        self.variables = variables
        self.region = region
        self.name = name

    def __repr__(self):
        return f"Chart({self.name}: p={self.p}, q={self.q}, vars={self.variables})"

    @property
    def dim(self):
        return (self.p, self.q)

    def coordinate(self, i: int) -> SuperNumber:
        """Standard coordinate ``i`` (1-based, even ones first)."""
        if i <= self.p:
            return scalar(self.q, E.var(self.variables[i - 1]))
        return generator(self.q, i - self.p)

    def standard(self) -> list:
        return [self.coordinate(i) for i in range(1, self.p + self.q + 1)]

    def lift(self, g) -> SuperNumber:
        """A scalar expression as a super number with no soul."""
        return scalar(self.q, g)

    def sample_points(self, n: int = 16, seed: int = 0) -> dict:
        rng = np.random.default_rng(seed)
        if self.region is not None and hasattr(self.region, "sample_points"):
            return self.region.sample_points(n, rng)
        return {v: rng.uniform(0.1, 0.9, size=n) for v in self.variables}


def _check_images(chart: Chart, images, n_even: int, n_odd: int):
    images = list(images)
    if len(images) != n_even + n_odd:
        raise ValueError(f"expected {n_even + n_odd} images, got {len(images)}")
    for k, im in enumerate(images):
        if not isinstance(im, SuperNumber):
            im = images[k] = chart.lift(im)
        if im.q != chart.q:
            raise MismatchedGeneratorCount(f"image {k + 1} has q={im.q}, chart has q={chart.q}")
        want = Parity.EVEN if k < n_even else Parity.ODD
        got = im.parity
        if got is not want and not (want is Parity.ODD and im.is_zero()):
            raise ParityError(f"image {k + 1} should be {want.name.lower()}, is {got.name.lower()}")
    return images


class Retraction:
    """A retraction ``gamma`` given by the even images ``gamma*(u_0)``.

    The body of ``gamma*(u_{i,0})`` must be exactly ``u_i``.
    """

    def __init__(self, chart: Chart, images):
        images = _check_images(chart, images, chart.p, 0)
        for name, im in zip(chart.variables, images):
            if im.body is not E.var(name):
                raise BodyMismatch(f"body of gamma*({name}) is {im.body}, expected {name}")
        self.chart = chart
        self.images = images

    @classmethod
    def canonical(cls, chart: Chart) -> "Retraction":
        return cls(chart, [chart.coordinate(i) for i in range(1, chart.p + 1)])

    def is_canonical(self) -> bool:
        return all(im.soul.is_zero() for im in self.images)

    def pull(self, g) -> SuperNumber:
        """``gamma*(g)`` for a scalar function ``g`` of the base coordinates."""
        g = E.as_expr(g)
        return compose_scalar(g, self._args())

    def _args(self):
        return dict(zip(self.chart.variables, self.images))

    def __repr__(self):
        ims = ", ".join(str(i) for i in self.images)
        return f"Retraction({ims})"


class Morphism:
    """Morphism ``phi: source -> target`` given by ``phi*`` of the target coordinates."""

    def __init__(self, source: Chart, target: Chart, images):
        self.source = source
        self.target = target
        self.images = _check_images(source, images, target.p, target.q)

    @property
    def even_images(self):
        return self.images[: self.target.p]

    @property
    def odd_images(self):
        return self.images[self.target.p:]

    @classmethod
    def identity(cls, chart: Chart) -> "Morphism":
        return cls(chart, chart, chart.standard())

    def then(self, other: "Morphism") -> "Morphism":
        """Composite ``other o self`` (first ``self``, then ``other``)."""
        if other.source is not self.target and other.source.dim != self.target.dim:
            raise ValueError("morphisms are not composable")
        return Morphism(self.source, other.target,
                        [pullback_fn(self, im) for im in other.images])

    def body_jacobian(self):
        """Matrix ``d phi_0^j / d u_i`` of the body map (rows: source variables)."""
        return [[E.diff(im.body, v) for im in self.even_images] for v in self.source.variables]

    def check_invertible(self, n: int = 32):
        if self.source.p != self.target.p or self.source.q != self.target.q:
            raise NotInvertible("source and target dimensions differ")
        _check_det(expr_det(self.body_jacobian()), self.source, n, NotInvertible)

    def check_range(self, n: int = 32) -> bool:
        """Sampled check that the body map lands in the target region."""
        reg = self.target.region
        if reg is None or not hasattr(reg, "contains"):
            return True
        pts = self.source.sample_points(n)
        vals = {v: np.broadcast_to(E.evaluate(im.body, pts), (n,))
                for v, im in zip(self.target.variables, self.even_images)}
        return bool(np.all(reg.contains(vals)))

    def __repr__(self):
        return f"Morphism({self.source.name} -> {self.target.name})"


class CoordinateSystem(Morphism):
    """A coordinate system on ``chart``: a morphism into a model chart of equal dimension.

    Parameters
    ----------
    chart : Chart
    images : sequence
        ``p`` even then ``q`` odd super numbers on ``chart``.
    names : sequence of str, optional
        Names of the new even coordinates (used when expressions are written
        in these coordinates, e.g. ``v1, v2``).
    """

    def __init__(self, chart: Chart, images, names=None, name: str = "x"):
        model = Chart(chart.p, chart.q, variables=names or [f"{name}{i + 1}" for i in range(chart.p)],
                      name=f"{name}-model")
        super().__init__(chart, model, images)
        self.chart = chart
        self.name = name

    @classmethod
    def standard(cls, chart: Chart) -> "CoordinateSystem":
        return cls(chart, chart.standard(), names=chart.variables, name="std")

    def is_standard(self) -> bool:
        return all(im.equals(c) for im, c in zip(self.images, self.source.standard()))

    def __repr__(self):
        return f"CoordinateSystem({self.name} on {self.chart.name})"


def pullback_fn(phi: Morphism, f: SuperNumber) -> SuperNumber:
    """``phi*(f)`` for ``f`` written in the target's standard coordinates."""
    if f.q != phi.target.q:
        raise MismatchedGeneratorCount("function and morphism target differ in q")
    q = phi.source.q
    args = dict(zip(phi.target.variables, phi.even_images))
    out = SuperNumber(q)
    mono_cache = {0: scalar(q, 1)}

    def mono(m):
        r = mono_cache.get(m)
        if r is None:
            low = m & -m
            j = low.bit_length() - 1
            r = phi.odd_images[j] * mono(m ^ low)
            mono_cache[m] = r
        return r

    for m, c in f.coeffs.items():
        mm = mono(m)
        if mm.is_zero():
            continue
        if c.free_vars & args.keys():
            out = out + compose_scalar(c, args) * mm
        else:
            out = out + mm * scalar(q, c)
    return out


def reconstruct(coeffs: dict, gamma: Retraction) -> SuperNumber:
    """``sum_nu gamma*(f_nu) xi^nu``."""
    q = gamma.chart.q
    out = SuperNumber(q)
    for m, c in coeffs.items():
        mono = SuperNumber(q, {m: E.ONE})
        out = out + gamma.pull(c) * mono
    return out


def decompose(f: SuperNumber, gamma: Retraction) -> dict:
    """Unique ``f_nu`` with ``f = sum_nu gamma*(f_nu) xi^nu``.

    Fixed-point iteration ``F <- F + (f - psi*(F))``; each step raises the
    nilpotency grade of the error by two, so ``q // 2`` steps are exact.
    """
    if gamma.is_canonical():
        return dict(f.coeffs)
    coeffs = dict(f.coeffs)
    for _ in range(f.q // 2):
        err = f - reconstruct(coeffs, gamma)
        if err.is_zero():
            break
        for m, c in err.coeffs.items():
            coeffs[m] = E.add(coeffs.get(m, E.ZERO), c)
    return {m: c for m, c in coeffs.items() if c is not E.ZERO}


def expr_det(m) -> E.Expr:
    n = len(m)
    if n == 0:
        return E.ONE
    if n == 1:
        return m[0][0]
    terms = []
    for j in range(n):
        if m[0][j] is E.ZERO:
            continue
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        t = E.mul(m[0][j], expr_det(minor))
        terms.append(t if j % 2 == 0 else E.mul(E.const(-1), t))
    return E.add(*terms)


def expr_matrix_inverse(m, det=None):
    """Symbolic inverse via the adjugate; returns ``(inverse, det)``."""
    n = len(m)
    if n > 6:
        raise ValueError("symbolic inverse limited to size 6")
    det = expr_det(m) if det is None else det
    dinv = E.power(det, -1)
    inv = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:j] + row[j + 1:] for k, row in enumerate(m) if k != i]
            c = expr_det(minor)
            if (i + j) % 2:
                c = E.mul(E.const(-1), c)
            inv[j][i] = E.mul(c, dinv)
    return inv, det


def _check_det(det, chart: Chart, n, exc):
    pts = chart.sample_points(n)
    try:
        vals = np.broadcast_to(E.evaluate(det, pts), (n,))
    except Exception as err:  # singular evaluation counts as non-invertible
        raise exc(f"Jacobian determinant not evaluable: {err}") from err
    if np.any(np.abs(vals) < DET_THRESHOLD):
        raise exc("body Jacobian determinant vanishes at a sample point")


def _solve_even(chart: Chart, funcs, targets, names=None) -> list:
    """Even ``w`` with body ``u`` such that ``funcs_k(w) = targets_k``.

    ``funcs`` are scalar expressions in ``names`` (default the chart
    variables) whose body map is a local diffeomorphism; ``targets`` even
    super numbers with ``body(targets_k) = funcs_k``. Chord-Newton iteration
    with the body Jacobian; exact after ``q // 2`` steps.
    """
    names = list(names or chart.variables)
    p = chart.p
    q = chart.q
    jac = [[E.diff(funcs[k], names[l]) for l in range(p)] for k in range(p)]
    # the body Jacobian is in the variables names; rename to chart variables
    ren = {a: E.var(b) for a, b in zip(names, chart.variables) if a != b}
    jac = [[E.substitute(c, ren) for c in row] for row in jac]
    inv, det = expr_matrix_inverse(jac)
    _check_det(det, chart, 32, BodyMismatch)
    w = [chart.coordinate(i + 1) for i in range(p)]
    for _ in range(q // 2):
        args = dict(zip(names, w))
        res = [t - compose_scalar(f, args) for f, t in zip(funcs, targets)]
        if all(r.is_zero() for r in res):
            break
        w = [w[l] + sum((res[k] * scalar(q, inv[l][k]) for k in range(p)), SuperNumber(q))
             for l in range(p)]
    return w


def associated_retraction(system) -> Retraction:
    """Retraction associated with a coordinate system ``x``.

    Determined by ``x_k = gamma*(body(x_k))`` for the even coordinates.
    """
    chart = system.source
    even = system.even_images
    for im in even:
        if not im.is_even():
            raise ParityError("even coordinate with odd component")
    funcs = [im.body for im in even]
    if all(im.soul.is_zero() for im in even):
        return Retraction.canonical(chart)
    w = _solve_even(chart, funcs, even)
    return Retraction(chart, w)


def pullback_retraction(phi: Morphism, gamma: Retraction) -> Retraction:
    """``phi* gamma``, i.e. ``phi_0^{-1} o gamma o phi`` on the source."""
    try:
        phi.check_invertible()
    except BodyMismatch as err:  # pragma: no cover - same condition
        raise NotInvertible(str(err)) from err
    chart = phi.source
    targets = [pullback_fn(phi, im) for im in gamma.images]
    funcs = [im.body for im in phi.even_images]
    try:
        w = _solve_even(chart, funcs, targets)
    except BodyMismatch as err:
        raise NotInvertible(str(err)) from err
    return Retraction(chart, w)
