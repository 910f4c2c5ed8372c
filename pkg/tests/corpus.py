"""Deterministic expression corpus and a finite-difference oracle."""

import itertools

import numpy as np

from painleve import expr as ex

VARS = ("x", "y", "z")

_UNARY = [
    "sin({0})", "cos({0})", "exp(0.5*{0})", "log(2 + {0}^2)", "sqrt(3 + sin({0}))",
    "atan({0})", "sinh(0.7*{0})", "cosh({0})", "tan(0.4*{0})", "({0})^3", "1/(2 + cos({0}))",
]
_BINARY = ["{0}*{1}", "{0} + {1}", "{0} - 2*{1}", "{0}/(3 + {1}^2)", "(1.5 + {0}^2)^(0.75)"]


def corpus(size=60):
    """At least ``size`` smooth expressions on [-1, 1]^3 built from every function node."""
    atoms = ["x", "y", "z", "x*y", "y - z", "x + 0.3*z"]
    out = []
    for k, (u, b) in enumerate(itertools.product(_UNARY, _BINARY)):
        inner = u.format(atoms[k % len(atoms)])
        other = _UNARY[(k * 7 + 3) % len(_UNARY)].format(atoms[(k + 2) % len(atoms)])
        out.append(b.format(f"({inner})", f"({other})"))
    return [ex.parse(s) for s in out[:max(size, 50)]]


def points(count, seed=0):
    return np.random.default_rng(seed).uniform(-0.9, 0.9, size=(count, len(VARS)))


def central_difference(e, v, p, h=1e-5):
    prog = ex.compile_exprs([e], VARS)
    k = VARS.index(v)
    up, down = np.array(p, dtype=float), np.array(p, dtype=float)
    up[k] += h
    down[k] -= h
    return (prog(list(up))[0] - prog(list(down))[0]) / (2 * h)


def relative(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))
