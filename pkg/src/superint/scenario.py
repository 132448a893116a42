"""Scenario files: parsing, materialization and verification runs.

A scenario is an INI-style file (``configparser``, ``=`` delimiter). Values
holding expressions use a small Python-like syntax parsed with :mod:`ast`;
``^`` and ``**`` both denote powers. Lists are comma separated, mappings use
``name: value`` items separated by ``;``.

Sections
--------
``[scenario]`` name, description, tolerance.
``[chart]`` p, q, variables, box, periodic, odd (generator names).
``[parameters]`` numeric constants usable in every expression.
``[systems]`` ``name = p+q images``.
``[retractions]`` ``name = canonical | associated(system) | p images``.
``[density]`` coeff, frame, kind, or model/system for a pulled-back density.
``[model]`` variables, odd, box, map: a second chart the density lives on.
``[reference]`` box, map: integrate the model density directly.
``[corners]`` rho, faces; ``[face.NAME]`` vanish, param, tangent, box, periodic.
``[derivations]`` ``A<i>`` classical fields, ``odd_shift`` list.
``[cov]`` gamma, gamma2, route.
``[form]`` frame, and components ``1 = ..``; ``[stokes]`` gamma, gamma2,
structures; ``[structure.NAME]`` ``face = tau``.
``[limit]`` parameter, values, power.
``[quadrature]`` order. ``[convention]`` s, b.
``[expect]`` ``quantity = expression`` with optional ``quantity.tol``.
"""

from __future__ import annotations

import ast
import configparser
import math
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources

from . import expr as E
from .berezin import BerezinDensity, Convention
from .chart import Chart, CoordinateSystem, Morphism, Retraction, associated_retraction, pullback_fn
from .corners import CornerData, Face, change_of_vars_corners, count_terms
from .errors import DecayWarning, ParseError, SuperIntError
from .grassmann import SuperNumber, compose_scalar, generator, scalar
from .quadrature import QuadratureRule, Region, integrate_berezin, richardson
from .stokes import IntegralForm, stokes_general, verify_stokes

__all__ = ["Scenario", "load", "load_example", "list_examples", "run", "Context"]

_FUNCS = {"sin": E.sin, "cos": E.cos, "exp": E.exp, "log": E.log, "sqrt": E.sqrt}
_ARG = E.var("_arg")
_ARG2 = E.var("_arg2")


class _Parser:
    """Evaluates expression strings to super numbers on ``q`` generators."""

    def __init__(self, q: int, even, odd, params, convention: Convention):
        self.q = q
        self.even = set(even)
        self.odd = {name: j + 1 for j, name in enumerate(odd)}
        self.params = dict(params)
        self.conv = convention

    def parse(self, text: str, where=(None, None, None)) -> SuperNumber:
        line, col0, source = where
        raw = text.strip()
        # '^' means power; rewrite it so it gets the precedence of '**'
        src = raw.replace("^", "**")
        back = []
        for k, ch in enumerate(raw):
            back.extend([k, k] if ch == "^" else [k])
        back.append(len(raw))

        def column(c):
            # 1-based column in the original line
            return (col0 or 0) + back[min(max(c, 0), len(back) - 1)] + 1

        try:
            tree = ast.parse(src, mode="eval")
        except SyntaxError as err:
            raise ParseError(f"invalid expression {text!r}: {err.msg}", line,
                             column((err.offset or 1) - 1), source) from None
        try:
            return self._eval(tree.body)
        except _NodeError as err:
            raise ParseError(err.msg, line, column(err.col), source) from None
        except SuperIntError as err:
            if isinstance(err, ParseError):
                raise
            raise ParseError(f"{type(err).__name__}: {err}", line, col0, source) from None

    def scalar(self, text, where=(None, None, None)) -> E.Expr:
        sn = self.parse(text, where)
        if not sn.soul.is_zero():
            raise ParseError(f"expected an ordinary function, got {text!r}", where[0], where[1], where[2])
        return sn.body

    def number(self, text, where=(None, None, None)) -> float:
        e = self.scalar(text, where)
        if e.free_vars:
            raise ParseError(f"expected a number, got {text!r}", where[0], where[1], where[2])
        return float(E.evaluate(e, {}))

    def _const(self, v):
        return scalar(self.q, E.const(float(v)))

    def _eval(self, node) -> SuperNumber:
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return self._const(node.value)
        if isinstance(node, ast.Name):
            n = node.id
            if n in self.params:
                return self._const(self.params[n])
            if n in self.even:
                return scalar(self.q, E.var(n))
            if n in self.odd:
                return generator(self.q, self.odd[n])
            if n == "pi":
                return self._const(math.pi)
            if n == "e":
                return self._const(math.e)
            if n == "inf":
                return self._const(math.inf)
            raise _NodeError(f"unknown name {n!r}", node)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = self._eval(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp):
            a = self._eval(node.left)
            if isinstance(node.op, ast.Pow):
                return self._pow(a, node.right)
            b = self._eval(node.right)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            if isinstance(node.op, ast.Div):
                if not b.is_even:
                    raise _NodeError("division by an odd element", node)
                return a / b
            raise _NodeError(f"unsupported operator {type(node.op).__name__}", node)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            return self._call(node)
        raise _NodeError(f"unsupported syntax {type(node).__name__}", node)

    def _pow(self, a, enode):
        ev = self._eval(enode)
        if not ev.soul.is_zero() or ev.body.free_vars:
            raise _NodeError("exponent must be a number", enode)
        k = float(E.evaluate(ev.body, {}))
        if k == int(k) and (k >= 0 or a.is_even):
            return a ** int(k)
        if not a.is_even:
            raise _NodeError("fractional power of a non-even element", enode)
        return compose_scalar(E.power(_ARG, k), {"_arg": a})

    def _call(self, node):
        name = node.func.id
        args = node.args
        if name == "sgn_s":
            if len(args) != 2:
                raise _NodeError("sgn_s takes (p, q)", node)
            p, q = (int(self._number(a)) for a in args)
            return self._const(self.conv.sign_s(p, q))
        vals = [self._eval(a) for a in args]
        for a, v in zip(args, vals):
            if not v.is_even:
                raise _NodeError(f"{name} needs even arguments", a)
        if name in _FUNCS and len(vals) == 1:
            return compose_scalar(_FUNCS[name](_ARG), {"_arg": vals[0]})
        if name == "atan2" and len(vals) == 2:
            return compose_scalar(E.atan2(_ARG, _ARG2), {"_arg": vals[0], "_arg2": vals[1]})
        if name == "bump" and len(vals) == 1:
            return compose_scalar(E.bump_fn(_ARG), {"_arg": vals[0]})
        raise _NodeError(f"unknown function {name}/{len(vals)}", node)

    def _number(self, node) -> float:
        v = self._eval(node)
        if not v.soul.is_zero() or v.body.free_vars:
            raise _NodeError("expected a number", node)
        return float(E.evaluate(v.body, {}))


class _NodeError(Exception):
    def __init__(self, msg, node):
        self.msg = msg
        self.col = getattr(node, "col_offset", 0)


def _split(text: str, sep: str = ","):
    """Split at ``sep`` outside parentheses, keeping the offset of each part."""
    parts, depth, start = [], 0, 0
    for k, ch in enumerate(text):
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif ch == sep and depth == 0:
            parts.append((text[start:k], start))
            start = k + 1
    parts.append((text[start:], start))
    out = []
    for s, off in parts:
        stripped = s.strip()
        if stripped:
            out.append((stripped, off + len(s) - len(s.lstrip())))
    return out


class Scenario:
    """Parsed scenario file (not yet bound to parameter values)."""

    def __init__(self, text: str, source: str = "<scenario>"):
        self.text = text
        self.source = source
        cfg = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#",),
                                        inline_comment_prefixes=None, interpolation=None)
        cfg.optionxform = str
        try:
            cfg.read_string(text, source=source)
        except configparser.Error as err:
            raise ParseError(str(err).splitlines()[0], getattr(err, "lineno", None), None, source) from None
        self.cfg = cfg
        self._lines = self._locate(text)
        self.name = cfg.get("scenario", "name", fallback=source)
        self.description = cfg.get("scenario", "description", fallback="")
        if not cfg.has_section("chart"):
            raise ParseError("missing [chart] section", None, None, source)

    @staticmethod
    def _locate(text):
        where, section = {}, None
        for n, raw in enumerate(text.splitlines(), start=1):
            m = re.match(r"\s*\[([^\]]+)\]", raw)
            if m:
                section = m.group(1).strip()
                continue
            m = re.match(r"(\s*)([^=#\s][^=]*?)\s*=\s*", raw)
            if m and section is not None and not raw.startswith((" ", "\t")):
                where[(section, m.group(2).strip())] = (n, m.end())
        return where

    def where(self, section, key, offset: int = 0):
        line, col = self._lines.get((section, key), (None, None))
        return line, None if col is None else col + offset, self.source

    def has(self, section, key=None) -> bool:
        if key is None:
            return self.cfg.has_section(section)
        return self.cfg.has_option(section, key)

    def get(self, section, key, default=None):
        if not self.cfg.has_option(section, key):
            if default is not None:
                return default
            raise ParseError(f"missing key {key!r} in [{section}]", None, None, self.source)
        return self.cfg.get(section, key)

    def items(self, section):
        return list(self.cfg.items(section)) if self.cfg.has_section(section) else []

    @property
    def limit(self):
        if not self.has("limit"):
            return None
        par = self.get("limit", "parameter")
        vals = [float(v) for v, _ in _split(self.get("limit", "values"))]
        return par, vals, float(self.get("limit", "power", "1"))


def load(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return Scenario(fh.read(), source=str(path))


def _examples_dir():
    return resources.files("superint") / "scenarios"


def list_examples() -> dict:
    """``{name: description}`` of the built-in scenarios."""
    out = {}
    for entry in sorted(_examples_dir().iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".ini"):
            scn = Scenario(entry.read_text(encoding="utf-8"), source=entry.name)
            out[entry.name[:-4]] = scn.description
    return out


def load_example(name: str) -> Scenario:
    path = _examples_dir() / f"{name}.ini"
    if not path.is_file():
        raise ParseError(f"unknown example {name!r}; known: {', '.join(list_examples())}")
    return Scenario(path.read_text(encoding="utf-8"), source=f"{name}.ini")


# --------------------------------------------------------------------------
# materialization


@dataclass
class Context:
    """Objects built from a scenario for fixed parameter values."""

    scenario: Scenario
    convention: Convention
    params: dict
    chart: Chart
    parser: _Parser
    systems: dict = field(default_factory=dict)
    retractions: dict = field(default_factory=dict)
    density: BerezinDensity | None = None
    corners: CornerData | None = None
    form: IntegralForm | None = None
    model: Chart | None = None
    model_coeff: SuperNumber | None = None
    reference_region: Region | None = None


def _convention(scn: Scenario, override=None) -> Convention:
    s = scn.get("convention", "s", "default") if scn.has("convention") else "default"
    b = scn.get("convention", "b", "default") if scn.has("convention") else "default"
    if override:
        s = override.get("s", s)
        b = override.get("b", b)
    try:
        return Convention(s, b)
    except ValueError as err:
        raise ParseError(str(err), None, None, scn.source) from None


def _params(scn: Scenario, conv, extra=None) -> dict:
    out = {}
    p0 = _Parser(0, [], [], {}, conv)
    for k, v in scn.items("parameters"):
        p0.params = out
        out[k] = p0.number(v, scn.where("parameters", k))
    out.update(extra or {})
    return out


def _box(scn, parser, section, key="box", periodic_key="periodic"):
    box = {}
    text = scn.get(section, key, " ")
    for item, off in _split(text, ";"):
        if ":" not in item:
            raise ParseError(f"box item {item!r} needs 'name: lo, hi'", *scn.where(section, key, off))
        name, rng = item.split(":", 1)
        bounds = _split(rng)
        if len(bounds) != 2:
            raise ParseError(f"box item {item!r} needs two bounds", *scn.where(section, key, off))
        box[name.strip()] = tuple(parser.number(b, scn.where(section, key, off)) for b, _ in bounds)
    periodic = {n for n, _ in _split(scn.get(section, periodic_key, " "))}
    return box, periodic


def _mapping(scn, parser, section, key):
    out = {}
    for item, off in _split(scn.get(section, key), ";"):
        name, val = item.split(":", 1)
        out[name.strip()] = parser.scalar(val, scn.where(section, key, off + len(name) + 1))
    return out


def _supers(scn, parser, section, key):
    return [parser.parse(t, scn.where(section, key, off)) for t, off in _split(scn.get(section, key))]


def materialize(scn: Scenario, params=None, convention=None) -> Context:
    """Build charts, systems, retractions, density and corner data."""
    conv = convention or _convention(scn)
    prm = _params(scn, conv, params)
    p = int(scn.get("chart", "p"))
    q = int(scn.get("chart", "q"))
    variables = [v for v, _ in _split(scn.get("chart", "variables", ", ".join(f"u{i}" for i in range(1, p + 1))))]
    odd = [v for v, _ in _split(scn.get("chart", "odd", ", ".join(f"xi{j}" for j in range(1, q + 1))))]
    if len(variables) != p or len(odd) != q:
        raise ParseError("chart variable count does not match (p, q)", *scn.where("chart", "variables"))
    parser = _Parser(q, variables, odd, prm, conv)
    box, periodic = _box(scn, parser, "chart")
    region = Region(box, periodic=periodic) if box else None
    chart = Chart(p, q, variables=variables, region=region, name=scn.name)
    ctx = Context(scn, conv, prm, chart, parser)

    for name, _ in scn.items("systems"):
        ims = _supers(scn, parser, "systems", name)
        ctx.systems[name] = CoordinateSystem(chart, ims, name=name)
    for name, text in scn.items("retractions"):
        t = text.strip()
        m = re.fullmatch(r"associated\(\s*(\w+)\s*\)", t)
        if t == "canonical":
            ctx.retractions[name] = Retraction.canonical(chart)
        elif m:
            sysname = m.group(1)
            if sysname not in ctx.systems:
                raise ParseError(f"unknown system {sysname!r}", *scn.where("retractions", name))
            ctx.retractions[name] = associated_retraction(ctx.systems[sysname])
        else:
            ctx.retractions[name] = Retraction(chart, _supers(scn, parser, "retractions", name))

    if scn.has("model"):
        mvars = [v for v, _ in _split(scn.get("model", "variables"))]
        modd = [v for v, _ in _split(scn.get("model", "odd", ", ".join(f"eta{j}" for j in range(1, q + 1))))]
        mparser = _Parser(q, mvars, modd, prm, conv)
        ctx.model = Chart(len(mvars), q, variables=mvars, name="model")
        ctx.model_coeff = mparser.parse(scn.get("model", "coeff"), scn.where("model", "coeff"))
    if scn.has("reference"):
        rparser = _Parser(0, [], [], prm, conv)
        rbox, rper = _box(scn, rparser, "reference")
        rmap = None
        if scn.has("reference", "map"):
            refvars = list(rbox)
            mp = _Parser(0, refvars, [], prm, conv)
            rmap = _mapping(scn, mp, "reference", "map")
        ctx.reference_region = Region(rbox, map=rmap, periodic=rper)

    if scn.has("density"):
        kind = scn.get("density", "kind", "density")
        frame = _frame(ctx, "density")
        if scn.has("density", "system"):
            sysname = scn.get("density", "system").strip()
            if ctx.model is None:
                raise ParseError("density.system needs a [model] section", *scn.where("density", "system"))
            phi = Morphism(chart, ctx.model, ctx.systems[sysname].images)
            coeff = pullback_fn(phi, ctx.model_coeff)
        else:
            coeff = parser.parse(scn.get("density", "coeff"), scn.where("density", "coeff"))
        ctx.density = BerezinDensity(chart, coeff, frame, kind, conv)

    if scn.has("corners"):
        ctx.corners = _corners(ctx)

    if scn.has("form"):
        comps = {}
        for k, v in scn.items("form"):
            if k.isdigit():
                comps[int(k)] = parser.parse(v, scn.where("form", k))
        ctx.form = IntegralForm(chart, comps, _frame(ctx, "form"), conv)
    return ctx


def _frame(ctx: Context, section):
    scn = ctx.scenario
    name = scn.get(section, "frame", "std").strip()
    if name == "std":
        return None
    if name in ctx.systems:
        return ctx.systems[name]
    raise ParseError(f"unknown frame {name!r}", *scn.where(section, "frame"))


def _corners(ctx: Context) -> CornerData:
    scn, parser, chart = ctx.scenario, ctx.parser, ctx.chart
    rho = [parser.scalar(t, scn.where("corners", "rho", off)) for t, off in _split(scn.get("corners", "rho"))]
    faces = []
    for name, off in _split(scn.get("corners", "faces")):
        sec = f"face.{name}"
        if not scn.has(sec):
            raise ParseError(f"missing section [{sec}]", *scn.where("corners", "faces", off))
        fparser0 = _Parser(0, [], [], ctx.params, ctx.convention)
        fbox, fper = _box(scn, fparser0, sec)
        fparser = _Parser(0, list(fbox), [], ctx.params, ctx.convention)
        vanish = [int(v) - 1 for v, _ in _split(scn.get(sec, "vanish"))]
        param = _mapping(scn, fparser, sec, "param")
        tangent = [parser.scalar(t, scn.where(sec, "tangent", o)) for t, o in _split(scn.get(sec, "tangent", " "))]
        faces.append(Face(name, vanish, param, tangent, fbox, fper))
    fields = {}
    shift = None
    for k, v in scn.items("derivations"):
        m = re.fullmatch(r"A(\d+)", k)
        if m:
            fields[int(m.group(1)) - 1] = [parser.scalar(t, scn.where("derivations", k, o)) for t, o in _split(v)]
        elif k == "odd_shift":
            shift = _supers(scn, parser, "derivations", k)
    return CornerData(chart, rho, faces, fields=fields, odd_shift=shift)


# --------------------------------------------------------------------------
# runs


def _rule(scn: Scenario, order=None) -> QuadratureRule:
    if order is None:
        order = int(scn.get("quadrature", "order", "32")) if scn.has("quadrature") else 32
    return QuadratureRule(int(order))


def _cov_once(ctx: Context, rule, count=False, route=None) -> dict:
    scn = ctx.scenario
    if ctx.density is None or ctx.corners is None:
        raise ParseError("change of variables needs [density] and [corners]", None, None, scn.source)
    g = ctx.retractions[scn.get("cov", "gamma", "gamma").strip()]
    g2 = ctx.retractions[scn.get("cov", "gamma2", "gamma2").strip()]
    route = route or scn.get("cov", "route", "superderivation").strip()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DecayWarning)
        dec = change_of_vars_corners(ctx.density, g, g2, ctx.corners, rule=rule, route=route)
    out = {
        "route": route,
        "lhs": dec.lhs,
        "bulk": dec.bulk,
        "terms": [{"face": t.face, "j": list(t.j), "j_down": list(t.j_down), "value": t.value}
                  for t in dec.terms],
        "boundary": dec.boundary,
        "total": dec.total,
        "residual": dec.residual,
        "warnings": sorted({str(w.message) for w in caught if issubclass(w.category, DecayWarning)}),
    }
    if count:
        out["term_count"] = count_terms(ctx.density, g, g2, ctx.corners)
    return out


def _stokes_once(ctx: Context, rule) -> dict:
    scn = ctx.scenario
    if ctx.form is None or ctx.corners is None:
        raise ParseError("Stokes verification needs [form] and [corners]", None, None, scn.source)
    g = ctx.retractions[scn.get("stokes", "gamma", "gamma").strip()]
    rep = verify_stokes(ctx.form, g, ctx.corners, rule)
    out = {"lhs": rep.lhs, "rhs": rep.rhs, "sign": rep.sign, "residual": rep.residual,
           "boundary": rep.boundary, "structures": {}}
    g2 = ctx.retractions[scn.get("stokes", "gamma2", scn.get("stokes", "gamma", "gamma")).strip()]
    for sname, _ in _split(scn.get("stokes", "structures", " ")):
        sec = f"structure.{sname}"
        taus = {k: ctx.parser.parse(v, scn.where(sec, k)) for k, v in scn.items(sec)}
        gen = stokes_general(ctx.form, g2, ctx.corners, taus, rule)
        q = ctx.chart.q
        uncorrected = gen.sign * (-1) ** q * sum(gen.boundary.values())
        out["structures"][sname] = {
            "lhs": gen.lhs,
            "rhs": gen.rhs,
            "residual": gen.residual,
            "uncorrected": uncorrected,
            "corrections": [{"face": f, "j": j, "value": v} for (f, j), v in gen.corrections.items()],
        }
    return out


def _flatten(prefix, d, out):
    for k, v in d.items():
        key = f"{prefix}.{k}" if prefix else k
        if isinstance(v, dict):
            _flatten(key, v, out)
        elif isinstance(v, (int, float)) and not isinstance(v, bool):
            out[key] = float(v)
    return out


def run(scn: Scenario, mode: str = "run", convention=None, order=None, tolerance=None,
        count_terms_: bool = False) -> dict:
    """Run the verifications of ``scn`` and return a JSON-ready report.

    ``mode`` is ``"run"`` (everything declared), ``"cov"`` or ``"stokes"``.
    """
    conv = convention if isinstance(convention, Convention) else _convention(scn, convention)
    rule = _rule(scn, order)
    tol = float(tolerance if tolerance is not None else scn.get("scenario", "tolerance", "1e-8"))
    report = {
        "scenario": scn.name,
        "description": scn.description,
        "convention": {"s": conv.s_rule, "b": conv.b_rule},
        "quadrature": {"kind": "gauss-legendre", "order": rule.order},
        "tolerance": tol,
    }
    do_cov = mode in ("run", "cov") and scn.has("cov")
    do_stokes = mode in ("run", "stokes") and scn.has("stokes")
    if mode == "cov" and not scn.has("cov"):
        raise ParseError("scenario has no [cov] section", None, None, scn.source)
    if mode == "stokes" and not scn.has("stokes"):
        raise ParseError("scenario has no [stokes] section", None, None, scn.source)
    residuals = []
    lim = scn.limit
    # an expectation on the term count implies counting
    count_terms_ = count_terms_ or any(k == "term_count" for k, _ in scn.items("expect"))
    if do_cov:
        if lim is None:
            ctx = materialize(scn, convention=conv)
            cov = _cov_once(ctx, rule, count_terms_)
            residuals.append(cov["residual"])
        else:
            par, vals, power = lim
            runs = []
            for v in vals:
                ctx = materialize(scn, {par: v}, conv)
                r = _cov_once(ctx, rule, count_terms_)
                r[par] = v
                runs.append(r)
                residuals.append(r["residual"])
            cov = {"runs": runs, "parameter": par, "power": power}
            for key in ("lhs", "bulk", "boundary"):
                cov[key] = richardson(vals, [r[key] for r in runs], power)
            cov["total"] = cov["bulk"] + cov["boundary"]
            if count_terms_:
                cov["term_count"] = runs[0]["term_count"]
        if ctx.reference_region is not None:
            ref = integrate_berezin(BerezinDensity(ctx.model, ctx.model_coeff, None, "density", conv),
                                    Retraction.canonical(ctx.model), ctx.reference_region, rule)
            cov["reference"] = ref
            cov["identity_residual"] = abs(ref - cov["total"])
            residuals.append(cov["identity_residual"])
        report["cov"] = cov
        if count_terms_:
            report["term_count"] = cov["term_count"]
    if do_stokes:
        ctx = materialize(scn, convention=conv)
        st = _stokes_once(ctx, rule)
        residuals.append(st["residual"])
        residuals.extend(s["residual"] for s in st["structures"].values())
        report["stokes"] = st
    quantities = _flatten("", {k: report[k] for k in ("cov", "stokes") if k in report}, {})
    quantities.update({k[4:]: v for k, v in quantities.items() if k.startswith("cov.")})
    checks = []
    eparser = _Parser(0, [], [], _params(scn, conv), conv)
    for key, text in scn.items("expect"):
        if key.endswith(".tol"):
            continue
        want = eparser.number(text, scn.where("expect", key))
        etol = float(scn.get("expect", key + ".tol", str(tol)))
        if key not in quantities:
            if (mode == "cov" and key.startswith("stokes")) or (mode == "stokes" and not key.startswith("stokes")):
                continue
            raise ParseError(f"unknown quantity {key!r}", *scn.where("expect", key))
        got = quantities[key]
        checks.append({"quantity": key, "value": got, "expected": want, "error": abs(got - want),
                       "tolerance": etol, "pass": abs(got - want) < etol})
    report["expect"] = checks
    report["max_residual"] = max(residuals) if residuals else 0.0
    report["pass"] = bool(report["max_residual"] < tol and all(c["pass"] for c in checks))
    return report
