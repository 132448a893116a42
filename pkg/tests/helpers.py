"""Shared strategies and numeric helpers for the test suite."""

import numpy as np
from hypothesis import strategies as st

from superint import expr as E
from superint.grassmann import SuperNumber, masks_of_grade

VARS = ["u1", "u2"]


def _leaf():
    return st.one_of(
        st.sampled_from([E.var(v) for v in VARS]),
        st.floats(-2, 2, allow_nan=False).map(lambda c: E.const(round(c, 3))),
    )


def _node(children):
    return st.one_of(
        st.tuples(children, children).map(lambda ab: E.add(*ab)),
        st.tuples(children, children).map(lambda ab: E.mul(*ab)),
        children.map(E.sin),
        children.map(E.cos),
        # bounded arguments keep exp and sqrt finite and smooth
        children.map(lambda a: E.exp(E.sin(a))),
        children.map(lambda a: E.sqrt(E.add(E.ONE, E.power(a, 2)))),
        children.map(lambda a: E.power(a, 2)),
    )


exprs = st.recursive(_leaf(), _node, max_leaves=6)


def random_points(n, seed=0, lo=-1.0, hi=1.0, names=VARS):
    rng = np.random.default_rng(seed)
    return {v: rng.uniform(lo, hi, size=n) for v in names}


def values(e, pts):
    n = len(next(iter(pts.values())))
    return np.broadcast_to(np.asarray(E.evaluate(e, pts), dtype=float), (n,))


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))))


def random_coeff(rng, names=VARS):
    """A smooth random coefficient in the chart variables."""
    a, b, c = (round(float(x), 3) for x in rng.uniform(-1, 1, 3))
    u, v = E.var(names[0]), E.var(names[-1])
    return E.add(E.const(a), E.mul(E.const(b), u), E.mul(E.const(c), E.sin(v)))


def random_super(rng, q, parity=None, density=0.7, names=VARS):
    """Random super number; ``parity`` in (None, 0, 1) selects homogeneous parts."""
    coeffs = {}
    for k in range(q + 1):
        if parity is not None and k % 2 != parity:
            continue
        for m in masks_of_grade(q, k):
            if m == 0 or rng.random() < density:
                coeffs[m] = random_coeff(rng, names)
    return SuperNumber(q, coeffs)


def seeds():
    return st.integers(min_value=0, max_value=2**32 - 1)
