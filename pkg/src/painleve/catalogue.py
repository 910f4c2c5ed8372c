"""Ready-made geometries: classical families plus engineered counterexamples.

Every constructor returns a :class:`PainleveSpec`.  The registry at the
bottom records, for each named entry, the properties the verification
modules are expected to report for it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .errors import SpecError
from .expr import Expr
from .stackel import ConformalData, PainleveSpec


def _vars(n: int) -> list[str]:
    return [f"x{i + 1}" for i in range(n)]


def _box(variables: Sequence[str], half_width: float = 0.5, center: float = 0.0) -> dict:
    return {v: (center - half_width, center + half_width) for v in variables}


def _identity(size: int) -> list[list[Expr]]:
    return [[ex.ONE if i == j else ex.ZERO for j in range(size)] for i in range(size)]


def _matrix(m) -> list[list[Expr]]:
    return [[ex.as_expr(e) for e in row] for row in m]


def default_test_functions(variables: Sequence[str]) -> list[Expr]:
    """Eight smooth functions mixing every coordinate."""
    v = list(variables)
    first, last = v[0], v[-1]
    mid = v[len(v) // 2]
    total = " + ".join(v)
    squares = " + ".join(f"{x}^2" for x in v)
    sources = [
        f"{first}*{last} + {mid}^2",
        f"sin({first})*cos({last})",
        f"exp(0.3*{first} - 0.2*{last})",
        f"{first}^3 - 2*{mid}*{last}",
        f"cos({total})",
        f"1 + {squares}",
        f"{first}*{mid}*{last} + 0.5*{mid}",
        f"sin(0.7*{first} + 0.4*{mid}) + exp(0.25*{last})",
    ]
    return [ex.parse(s) for s in sources]


def _spec(blocks, domain, S, Gs, name, tests=None, conformal=None) -> PainleveSpec:
    variables = [v for b in blocks for v in b]
    if tests is None:
        tests = default_test_functions(variables)
    return PainleveSpec.make(blocks, domain, _matrix(S), [_matrix(G) for G in Gs],
                             tests=tests, conformal=conformal, name=name)


def _partition(variables: Sequence[str], sizes: Sequence[int]) -> list[list[str]]:
    if sum(sizes) != len(variables):
        raise SpecError("partition sizes must add up to the dimension")
    out, k = [], 0
    for s in sizes:
        out.append(list(variables[k:k + s]))
        k += s
    return out


# ---------------------------------------------------------------------------
# constructors


def flat_stackel(r: int) -> list[list[Expr]]:
    """Constant Stäckel matrix whose block factors all equal 1.

    The identity matrix does not qualify: its first-column cofactors
    below the diagonal vanish.  Here the first row is ``(1, -1, ..., -1)``
    and row ``a`` is the unit vector ``e_a``, so ``det S = 1`` and the
    first row of the inverse is all ones.
    """
    S = _identity(r)
    S[0] = [ex.ONE] + [ex.const(-1.0)] * (r - 1)
    return S


def euclidean(n: int = 3, partition: Sequence[int] = (1, 2), half_width: float = 0.5) -> PainleveSpec:
    variables = _vars(n)
    blocks = _partition(variables, partition)
    return _spec(blocks, _box(variables, half_width), flat_stackel(len(blocks)),
                 [_identity(len(b)) for b in blocks], name=f"euclidean{n}")


def liouville2d(f1="x1^2", f2="x2^2 + 1", half_width: float = 0.5) -> PainleveSpec:
    """``(f1 + f2)(dx1^2 + dx2^2)`` with the Stäckel matrix ``[[f1, 1], [f2, -1]]``."""
    f1, f2 = ex.as_expr(f1), ex.as_expr(f2)
    variables = ["x1", "x2"]
    return _spec([["x1"], ["x2"]], _box(variables, half_width), [[f1, 1], [f2, -1]],
                 [[[1]], [[1]]], name="liouville2d")


def warped(G1, G2, f1=None, f2=None, blocks=(("x1",), ("x2", "x3")), domain=None,
           name: str = "warped") -> PainleveSpec:
    """Two-group warped products.

    With ``f1`` (a function of the first group) the metric is
    ``G1 + f1 G2``; with ``f2`` (a function of the second group) it is
    ``f2 G1 + G2``.
    """
    if (f1 is None) == (f2 is None):
        raise SpecError("give exactly one of f1, f2")
    blocks = [list(b) for b in blocks]
    variables = [v for b in blocks for v in b]
    domain = domain or _box(variables)
    if f1 is not None:
        f = ex.as_expr(f1)
        S = [[ex.ONE, ex.neg(ex.div(ex.ONE, f))], [ex.ZERO, ex.ONE]]
    else:
        f = ex.as_expr(f2)
        inv = ex.div(ex.ONE, f)
        S = [[ex.ONE, ex.const(-1.0)], [ex.sub(ex.ONE, inv), inv]]
    return _spec(blocks, domain, S, [G1, G2], name=name)


def multiply_warped(fs, Gs, blocks, domain=None, name: str = "multiply_warped") -> PainleveSpec:
    """``sum_a f_a G_a`` with every ``f_a`` a function of the first group.

    Rows 2..r of the Stäckel matrix are constant (``e_1 + e_a``); the first
    row is solved so that the first row of ``inv(S)`` is ``1/f_a``.
    """
    fs = [ex.as_expr(f) for f in fs]
    blocks = [list(b) for b in blocks]
    r = len(blocks)
    if len(fs) != r or len(Gs) != r:
        raise SpecError("need one warping function and one block metric per group")
    variables = [v for b in blocks for v in b]
    domain = domain or _box(variables)
    first = fs[0]
    rest = ex.sum_exprs(ex.div(ex.ONE, f) for f in fs[1:])
    row1 = [ex.mul(ex.sub(ex.ONE, rest), first)] + [ex.neg(ex.div(first, f)) for f in fs[1:]]
    S = [row1]
    for a in range(1, r):
        S.append([ex.ONE] + [ex.ONE if b == a else ex.ZERO for b in range(1, r)])
    return _spec(blocks, domain, S, Gs, name=name)


def di_pirro(a1="1", a2="1", a3="1", c12="x1^2 + x2^2", c3="1 + x3^2", half_width: float = 0.5):
    """di Pirro metric with groups {x1, x2} and {x3}.

    The Stäckel matrix is pinned to ``[[c12, -1], [c3, 1]]``.  With this
    choice the second Killing tensor is the negative of the classical
    extra integral; :func:`di_pirro_integral` returns the latter.
    """
    a1, a2, a3, c12, c3 = map(ex.as_expr, (a1, a2, a3, c12, c3))
    blocks = [["x1", "x2"], ["x3"]]
    G1 = [[ex.div(ex.ONE, a1), ex.ZERO], [ex.ZERO, ex.div(ex.ONE, a2)]]
    G2 = [[ex.div(ex.ONE, a3)]]
    return _spec(blocks, _box(["x1", "x2", "x3"], half_width), [[c12, -1], [c3, 1]], [G1, G2],
                 name="di_pirro")


def di_pirro_integral(a1="1", a2="1", a3="1", c12="x1^2 + x2^2", c3="1 + x3^2") -> list[list[Expr]]:
    """Contravariant components of ``(c3 (a1 p1^2 + a2 p2^2) - c12 a3 p3^2) / (c12 + c3)``."""
    a1, a2, a3, c12, c3 = map(ex.as_expr, (a1, a2, a3, c12, c3))
    D = ex.add(c12, c3)
    K = [[ex.ZERO] * 3 for _ in range(3)]
    K[0][0] = ex.div(ex.mul(c3, a1), D)
    K[1][1] = ex.div(ex.mul(c3, a2), D)
    K[2][2] = ex.neg(ex.div(ex.mul(c12, a3), D))
    return K


def vandermonde(fs=None, n: int = 3, half_width: float = 0.5) -> PainleveSpec:
    """Benenti-type Stäckel matrix ``S[a][b] = (-1)^(n-a) f_a^(n-b)`` (1-based).

    With this sign pattern ``det S`` equals the product of ``|f_a - f_b|``
    and every block factor is positive once ``f_1 < f_2 < ... < f_n``.
    The defaults ``f_a = x_a + 2a`` are ordered on any box of half-width
    below 1.
    """
    variables = _vars(n)
    if fs is None:
        fs = [f"{v} + {2 * (a + 1)}" for a, v in enumerate(variables)]
    fs = [ex.as_expr(f) for f in fs]
    if len(fs) != n:
        raise SpecError("need one function per coordinate")
    domain = _box(variables, half_width)
    _check_ordering(fs, variables, domain)
    S = []
    for a in range(n):
        sign = -1.0 if (n - (a + 1)) % 2 else 1.0
        S.append([ex.mul(ex.const(sign), ex.power(fs[a], ex.const(n - (b + 1)))) for b in range(n)])
    return _spec([[v] for v in variables], domain, S, [[[1]] for _ in variables], name=f"vandermonde{n}")


def _check_ordering(fs, variables, domain, samples: int = 257) -> None:
    ranges = []
    for f, v in zip(fs, variables):
        if not f.free <= {v}:
            raise SpecError(f"f for {v} depends on other variables")
        lo, hi = domain[v]
        values = [ex.evaluate(f, {v: t}) for t in np.linspace(lo, hi, samples)]
        ranges.append((min(values), max(values), v))
    for (lo1, hi1, v1), (lo2, hi2, v2) in zip(ranges, ranges[1:]):
        if hi1 >= lo2:
            raise SpecError(f"ordering f({v1}) < f({v2}) fails: max {hi1} >= min {lo2}")


def stackel3d_triangular(a: float = 0.5, s12="1 + x1^2", s22="1 + 0.1*x2", s23="2 + x2^2",
                         s32="-1", s33="-1 - 0.2*x3^2", s13=None, half_width: float = 0.5) -> PainleveSpec:
    """3D Stäckel matrix ``[[1, s12, a s13], [0, s22, s23], [0, s32, s33]]``.

    ``s13`` defaults to ``s12``; that coincidence is what makes the
    Robertson conditions hold for every ``a``.
    """
    s12, s22, s23, s32, s33 = map(ex.as_expr, (s12, s22, s23, s32, s33))
    s13 = s12 if s13 is None else ex.as_expr(s13)
    S = [[ex.ONE, s12, ex.mul(ex.const(a), s13)], [ex.ZERO, s22, s23], [ex.ZERO, s32, s33]]
    variables = _vars(3)
    return _spec([[v] for v in variables], _box(variables, half_width), S, [[[1]]] * 3,
                 name="stackel3d_triangular")


def painleve4d_r3(h="1 + 0.2*x1^2", k="2 + x1*x2", l="exp(0.3*x1 - 0.2*x2)",
                  G1=(("1 + 0.1*x2^2", "0.2*x1"), ("0.2*x1", "1")), half_width: float = 0.5) -> PainleveSpec:
    """``h G1 + k dx3^2 + l dx4^2`` with h, k, l, G1 depending on (x1, x2)."""
    spec = multiply_warped([h, k, l], [G1, [["1"]], [["1"]]], [["x1", "x2"], ["x3"], ["x4"]],
                           domain=_box(_vars(4), half_width), name="painleve4d_r3")
    return spec


def painleve4d_triangular(a: float = 1.0, s12="-1 - x1^2", s23="2 + x2^2", s33="-3 - 0.2*x3^2",
                          s34="-1", s43="1", s44="-2 - 0.1*x4^2", half_width: float = 0.5) -> PainleveSpec:
    """4D Stäckel matrix ``[[1, s12, a s12, s12], [0, 1, s23, s23], [0, 0, s33, s34], [0, 0, s43, s44]]``."""
    s12, s23, s33, s34, s43, s44 = map(ex.as_expr, (s12, s23, s33, s34, s43, s44))
    S = [
        [ex.ONE, s12, ex.mul(ex.const(a), s12), s12],
        [ex.ZERO, ex.ONE, s23, s23],
        [ex.ZERO, ex.ZERO, s33, s34],
        [ex.ZERO, ex.ZERO, s43, s44],
    ]
    variables = _vars(4)
    return _spec([[v] for v in variables], _box(variables, half_width), S, [[[1]]] * 4,
                 name="painleve4d_triangular")


def sphere2() -> PainleveSpec:
    """Unit 2-sphere ``dθ^2 + sin^2 θ dφ^2`` as a warped product."""
    spec = warped([["1"]], [["1"]], f1="sin(x1)^2", blocks=(("x1",), ("x2",)),
                  domain={"x1": (0.5, 2.5), "x2": (-1.0, 1.0)}, name="sphere2")
    return spec


def robertson_violator(b: float = 1.0, half_width: float = 0.5) -> PainleveSpec:
    """A valid Painlevé metric that breaks the Robertson conditions.

    ``S = [[1 + x1^2, -1], [1 + b x2^2, 1]]`` gives ``det S = 2 + x1^2 + b x2^2``
    with both first-column cofactors equal to 1, so the metric is
    ``det S (dx1^2 + G2)``.  Its Robertson ratio is ``det S`` itself, which
    does not factor over the groups.
    """
    S = [["1 + x1^2", "-1"], [f"1 + {b!r}*x2^2", "1"]]
    G2 = [["1", "0"], ["0", "1 + 0.5*x3^2"]]
    variables = _vars(3)
    return _spec([["x1"], ["x2", "x3"]], _box(variables, half_width), S, [[["1"]], G2],
                 name="robertson_violator")


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class CatalogueEntry:
    name: str
    build: Callable[[], PainleveSpec]
    painleve: bool
    robertson: bool
    note: str = ""
    params: dict = field(default_factory=dict)

    def spec(self) -> PainleveSpec:
        return self.build()


def _warped3() -> PainleveSpec:
    G2 = [["1 + 0.5*x3^2", "0.2*x2"], ["0.2*x2", "1"]]
    return warped([["1"]], G2, f1="1 + x1^2", name="warped3")


def _warped3_second() -> PainleveSpec:
    G1 = [["1"]]
    G2 = [["1 + x2^2", "0"], ["0", "exp(0.2*x3)"]]
    return warped(G1, G2, f2="2 + x2*x3", name="warped3_second")


def _multiply_warped3() -> PainleveSpec:
    return multiply_warped(["1 + 0.3*x1^2", "1 + x1^2", "2 + sin(x1)"], [[["1"]], [["1"]], [["1"]]],
                           [["x1"], ["x2"], ["x3"]], name="multiply_warped3")


CATALOGUE: dict[str, CatalogueEntry] = {
    e.name: e
    for e in [
        CatalogueEntry("euclidean3", lambda: euclidean(3, (1, 2)), True, True, "flat"),
        CatalogueEntry("liouville2d", liouville2d, True, True, "f1 = x1^2, f2 = x2^2 + 1"),
        CatalogueEntry("sphere2", sphere2, True, True, "unit sphere chart"),
        CatalogueEntry("warped3", _warped3, True, True, "G1 + f1 G2"),
        CatalogueEntry("warped3_second", _warped3_second, True, True, "f2 G1 + G2"),
        CatalogueEntry("multiply_warped3", _multiply_warped3, True, True, "constant lower rows"),
        CatalogueEntry("painleve4d_r3", painleve4d_r3, True, True, "h G1 + k dx3^2 + l dx4^2"),
        CatalogueEntry("di_pirro", di_pirro, True, False, "unit a_i; Q = c12 + c3 is not separable"),
        CatalogueEntry("vandermonde2", lambda: vandermonde(n=2), True, True, "f_a = x_a + 2a"),
        CatalogueEntry("vandermonde3", lambda: vandermonde(n=3), True, True, "f_a = x_a + 2a"),
        CatalogueEntry("stackel3d_triangular", stackel3d_triangular, True, True, "a = 0.5"),
        CatalogueEntry("painleve4d_triangular", painleve4d_triangular, True, True, "a = 1"),
        CatalogueEntry("robertson_violator", robertson_violator, True, False, "b = 1"),
    ]
}


def get(name: str) -> PainleveSpec:
    try:
        return CATALOGUE[name].spec()
    except KeyError:
        raise SpecError(f"unknown catalogue entry {name!r}; known: {', '.join(sorted(CATALOGUE))}") from None
