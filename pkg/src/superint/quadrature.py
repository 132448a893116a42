"""Tensor-product Gauss-Legendre quadrature over boxes, masked and mapped regions."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import expr as E
from .errors import DecayWarning, DomainError, NodeSingularity, NonFinite, PrecisionAdvisory

__all__ = [
    "Region",
    "QuadratureRule",
    "integrate_volume",
    "integrate_berezin",
    "check_decay",
    "richardson",
]

DEFAULT_ORDER = 32


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule with ``order`` nodes per axis."""

    order: int = DEFAULT_ORDER

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("quadrature order must be positive")

    def nodes_1d(self):
        return np.polynomial.legendre.leggauss(self.order)


def _as_rule(rule):
    if rule is None:
        return QuadratureRule()
    if isinstance(rule, int):
        return QuadratureRule(rule)
    return rule


def _axis_nodes(lo, hi, x, w):
    """Nodes and weights on ``(lo, hi)`` from reference nodes on ``(-1, 1)``."""
    if np.isfinite(lo) and np.isfinite(hi):
        return lo + (hi - lo) * (x + 1) / 2, w * (hi - lo) / 2
    t = (x + 1) / 2
    wt = w / 2
    if np.isfinite(lo):
        # u = lo + t / (1 - t)
        return lo + t / (1 - t), wt / (1 - t) ** 2
    if np.isfinite(hi):
        return hi - t / (1 - t), wt / (1 - t) ** 2
    # u = s / (1 - s^2) on s in (-1, 1)
    return x / (1 - x**2), w * (1 + x**2) / (1 - x**2) ** 2


@dataclass
class Region:
    """Integration region in named base variables.

    Parameters
    ----------
    box : dict
        ``{name: (lo, hi)}``; bounds may be infinite. For a mapped region
        this is the reference box.
    mask : list of Expr, optional
        Conditions ``m > 0``; nodes violating any condition contribute 0.
    map : dict, optional
        ``{target name: Expr in reference variables}``; the region is the
        image of ``box``.
    jacobian : Expr, optional
        Jacobian determinant of ``map``; computed symbolically if omitted.
    periodic : set of str
        Axes along which the integrand is periodic (no decay check).
    """

    box: dict
    mask: list = field(default_factory=list)
    map: dict | None = None
    jacobian: E.Expr | None = None
    periodic: set = field(default_factory=set)

    def __post_init__(self):
        self.box = {k: (float(lo), float(hi)) for k, (lo, hi) in self.box.items()}
        for k, (lo, hi) in self.box.items():
            if not lo < hi:
                raise ValueError(f"empty interval for {k}: ({lo}, {hi})")
        if self.mask and self.map:
            raise ValueError("a region is either masked or mapped, not both")
        self.periodic = set(self.periodic)
        if self.map is not None:
            self.map = {k: E.as_expr(v) for k, v in self.map.items()}
            if self.jacobian is None:
                refs = list(self.box)
                tgts = list(self.map)
                if len(refs) != len(tgts):
                    raise ValueError("map must have as many components as the reference box")
                from .chart import expr_det

                self.jacobian = expr_det([[E.diff(self.map[t], r) for t in tgts] for r in refs])

    @property
    def variables(self) -> list:
        return list(self.map) if self.map is not None else list(self.box)

    def nodes(self, rule=None):
        """Quadrature points ``{name: array}`` and weights (including Jacobians)."""
        rule = _as_rule(rule)
        x, w = rule.nodes_1d()
        axes = [_axis_nodes(lo, hi, x, w) for lo, hi in self.box.values()]
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
        pts = {k: g.ravel() for k, g in zip(self.box, grids)}
        weights = np.prod([g.ravel() for g in wgrids], axis=0) if axes else np.ones(1)
        if self.map is not None:
            memo: dict = {}
            jac = np.broadcast_to(E.evaluate(self.jacobian, pts, memo), weights.shape)
            if np.any(jac == 0):
                raise NodeSingularity("map Jacobian vanishes at a quadrature node")
            weights = weights * np.abs(jac)
            pts = {k: np.broadcast_to(E.evaluate(v, pts, memo), weights.shape).astype(float)
                   for k, v in self.map.items()}
        elif self.mask:
            keep = self.contains(pts)
            weights = np.where(keep, weights, 0.0)
        return pts, weights

    def contains(self, pts) -> np.ndarray:
        n = len(next(iter(pts.values())))
        ok = np.ones(n, dtype=bool)
        if self.map is None:
            for k, (lo, hi) in self.box.items():
                if k in pts:
                    ok &= (pts[k] > lo) & (pts[k] < hi)
        for m in self.mask:
            ok &= np.broadcast_to(E.evaluate(m, pts), (n,)) > 0
        return ok

    def sample_points(self, n, rng=None) -> dict:
        """Pseudo-random interior points (for sign and invertibility checks)."""
        rng = np.random.default_rng(0) if rng is None else rng

        def draw(k):
            out = {}
            for name, (lo, hi) in self.box.items():
                t = rng.uniform(0.02, 0.98, size=k)
                if np.isfinite(lo) and np.isfinite(hi):
                    out[name] = lo + (hi - lo) * t
                elif np.isfinite(lo):
                    out[name] = lo + t / (1 - t)
                elif np.isfinite(hi):
                    out[name] = hi - t / (1 - t)
                else:
                    out[name] = (2 * t - 1) / (1 - (2 * t - 1) ** 2)
            return out

        if self.map is not None:
            ref = draw(n)
            memo: dict = {}
            return {k: np.broadcast_to(E.evaluate(v, ref, memo), (n,)).astype(float)
                    for k, v in self.map.items()}
        if not self.mask:
            return draw(n)
        got = {k: [] for k in self.box}
        count = 0
        for _ in range(200):
            cand = draw(4 * n)
            keep = self.contains(cand)
            for k in got:
                got[k].append(cand[k][keep])
            count += int(keep.sum())
            if count >= n:
                break
        if count == 0:
            raise ValueError("masked region appears to be empty")
        return {k: np.concatenate(v)[:n] for k, v in got.items()}

    def boundary_nodes(self, rule=None, skip_periodic=True):
        """Nodes on the faces of the (reference) box, mapped if needed.

        Yields ``(axis name, side, points)`` with ``side`` 0 (lower) or 1.
        Infinite sides are skipped.
        """
        rule = _as_rule(rule)
        x, w = rule.nodes_1d()
        names = list(self.box)
        for a, name in enumerate(names):
            if skip_periodic and name in self.periodic:
                continue
            for side in (0, 1):
                val = self.box[name][side]
                if not np.isfinite(val):
                    continue
                others = [_axis_nodes(*self.box[k], x, w)[0] for k in names if k != name]
                grids = np.meshgrid(*others, indexing="ij") if others else []
                pts = {}
                it = iter(grids)
                for k in names:
                    pts[k] = np.full(grids[0].size if grids else 1, val) if k == name else next(it).ravel()
                if self.map is not None:
                    memo: dict = {}
                    n = len(pts[name])
                    pts = {k: np.broadcast_to(E.evaluate(v, pts, memo), (n,)).astype(float)
                           for k, v in self.map.items()}
                yield name, side, pts


def _eval_at(g, pts, n):
    try:
        with np.errstate(all="ignore"):
            vals = np.broadcast_to(np.asarray(E.evaluate(g, pts), dtype=float), (n,))
    except DomainError as err:
        raise NodeSingularity(f"integrand singular at a quadrature node: {err}") from err
    return vals


def integrate_volume(g, region: Region, rule=None) -> float:
    """``int g`` over ``region`` with tensor Gauss-Legendre nodes."""
    rule = _as_rule(rule)
    if region.mask:
        warnings.warn("masked region: expect slow convergence near curved boundaries",
                      PrecisionAdvisory, stacklevel=2)
    pts, w = region.nodes(rule)
    if region.mask:
        sel = w != 0
        pts = {k: v[sel] for k, v in pts.items()}
        w = w[sel]
    vals = _eval_at(E.as_expr(g), pts, len(w))
    if not np.all(np.isfinite(vals)):
        raise NonFinite("integrand is not finite at some quadrature node")
    return float(np.dot(vals, w))


def check_decay(g, region: Region, exempt=None, atol: float = 1e-8, rule=None) -> bool:
    """Warn if ``g`` does not vanish on undeclared parts of the box boundary.

    ``exempt(points) -> bool array`` marks boundary points lying on declared
    faces. Returns True when no warning was raised.
    """
    g = E.as_expr(g)
    rule = _as_rule(rule) if rule is not None else QuadratureRule(12)
    bad = []
    for name, side, pts in region.boundary_nodes(rule):
        n = len(next(iter(pts.values())))
        try:
            vals = _eval_at(g, pts, n)
        except NodeSingularity:
            continue
        mask = np.ones(n, dtype=bool)
        if exempt is not None:
            mask &= ~np.asarray(exempt(pts), dtype=bool)
        if np.any(np.abs(vals[mask]) > atol):
            bad.append(f"{name}={'lo' if side == 0 else 'hi'}")
    if bad:
        warnings.warn("integrand does not decay on boundary part(s) " + ", ".join(bad),
                      DecayWarning, stacklevel=2)
        return False
    return True


def integrate_berezin(omega, gamma, region: Region, rule=None) -> float:
    """``int_(M, gamma) omega = int gamma_!(omega)``."""
    from .berezin import fibre_integral

    return integrate_volume(fibre_integral(gamma, omega), region, rule)


def richardson(hs, values, power: float = 1.0) -> float:
    """Extrapolate ``values(h)`` to ``h = 0`` assuming an expansion in ``h**power``.

    Uses the polynomial through all points in the variable ``h**power``.
    """
    hs = np.asarray(hs, dtype=float) ** power
    values = np.asarray(values, dtype=float)
    if len(hs) != len(values) or len(hs) < 1:
        raise ValueError("need matching, nonempty h and value lists")
    # Neville evaluation at 0
    p = list(values)
    n = len(hs)
    for k in range(1, n):
        for i in range(n - k):
            p[i] = (hs[i + k] * p[i] - hs[i] * p[i + 1]) / (hs[i + k] - hs[i])
    return float(p[0])
