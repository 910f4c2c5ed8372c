"""Geometry specifications: charts, generalized Stäckel matrices, block metrics.

A :class:`PainleveSpec` is the single source of truth for one geometry.  The
metric it describes is block diagonal, with block ``a`` equal to
``det S / s^{a1}`` times the block metric ``G_a``.  Cofactors follow
``inv(S)[a][b] == cof[b][a] / det S``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .errors import NumericalError, SpecError
from .expr import Expr
from .sampling import validation_points

MAX_SYMBOLIC_BLOCK = 4


@dataclass(frozen=True)
class Chart:
    """Coordinate groups and the domain box they live in."""

    blocks: tuple[tuple[str, ...], ...]
    domain: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        names = [v for b in self.blocks for v in b]
        if len(self.blocks) < 2:
            raise SpecError("a chart needs at least two coordinate groups")
        if any(len(b) == 0 for b in self.blocks):
            raise SpecError("empty coordinate group")
        if len(set(names)) != len(names):
            raise SpecError("variable names must be distinct")
        for v in names:
            try:
                ex.var(v)
            except ValueError as err:
                raise SpecError(str(err)) from None
        box = {v: (lo, hi) for v, lo, hi in self.domain}
        if set(box) != set(names):
            raise SpecError("the domain must give an interval for every variable")
        for v, (lo, hi) in box.items():
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise SpecError(f"degenerate interval for {v}: [{lo}, {hi}]")

    @classmethod
    def make(cls, blocks: Sequence[Sequence[str]], domain: Mapping[str, Sequence[float]]) -> "Chart":
        blocks = tuple(tuple(b) for b in blocks)
        ordered = [v for b in blocks for v in b]
        missing = [v for v in ordered if v not in domain]
        if missing:
            raise SpecError(f"no interval for {missing[0]}")
        return cls(blocks, tuple((v, float(domain[v][0]), float(domain[v][1])) for v in ordered))

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for b in self.blocks for v in b)

    @property
    def n(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def r(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    def interval(self, v: str) -> tuple[float, float]:
        for name, lo, hi in self.domain:
            if name == v:
                return lo, hi
        raise KeyError(v)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.interval(v)[0] for v in self.variables])
        hi = np.array([self.interval(v)[1] for v in self.variables])
        return lo, hi

    def center(self) -> np.ndarray:
        lo, hi = self.bounds()
        return (lo + hi) / 2

    @cached_property
    def group_of(self) -> dict[str, int]:
        return {v: a for a, b in enumerate(self.blocks) for v in b}

    @cached_property
    def index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.variables)}

    def block_indices(self, a: int) -> list[int]:
        return [self.index[v] for v in self.blocks[a]]

    def contains(self, x: Sequence[float], slack: float = 0.0) -> bool:
        lo, hi = self.bounds()
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= lo - slack) and np.all(x <= hi + slack))


@dataclass(frozen=True)
class ConformalData:
    """Inputs for an R-separable conformal deformation ``g -> c^4 g``."""

    c: Expr
    lam: float
    a1: float
    phi: tuple[Expr, ...]


# ---------------------------------------------------------------------------
# symbolic linear algebra on small Expr matrices

def det_expr(m: Sequence[Sequence[Expr]]) -> Expr:
    """Determinant by cofactor expansion, memoized over minors."""
    size = len(m)
    memo: dict[tuple, Expr] = {}

    def minor_det(rows: tuple, cols: tuple) -> Expr:
        if len(rows) == 1:
            return m[rows[0]][cols[0]]
        key = (rows, cols)
        if key in memo:
            return memo[key]
        total = ex.ZERO
        r0, rest = rows[0], rows[1:]
        for k, c in enumerate(cols):
            entry = m[r0][c]
            if entry is ex.ZERO:
                continue
            term = ex.mul(entry, minor_det(rest, cols[:k] + cols[k + 1:]))
            total = ex.add(total, term) if k % 2 == 0 else ex.sub(total, term)
        memo[key] = total
        return total

    return minor_det(tuple(range(size)), tuple(range(size)))


def cofactor_matrix(m: Sequence[Sequence[Expr]]) -> list[list[Expr]]:
    size = len(m)
    if size == 1:
        return [[ex.ONE]]
    out = []
    for a in range(size):
        row = []
        for b in range(size):
            minor = [[m[i][j] for j in range(size) if j != b] for i in range(size) if i != a]
            d = det_expr(minor)
            row.append(d if (a + b) % 2 == 0 else ex.neg(d))
        out.append(row)
    return out


def inverse_expr(m: Sequence[Sequence[Expr]]) -> list[list[Expr]]:
    """Inverse via the adjugate; returns the transposed cofactors over det."""
    size = len(m)
    d = det_expr(m)
    cof = cofactor_matrix(m)
    return [[ex.div(cof[j][i], d) for j in range(size)] for i in range(size)]


# ---------------------------------------------------------------------------
# generic block-diagonal metric given by Exprs


class MetricField:
    """A block-diagonal metric whose entries are Exprs.

    This is the carrier for the generic (non-Stäckel) curvature and
    Laplacian formulas, so it also accepts metrics that are not of
    Painlevé type, e.g. conformal rescalings.
    """

    def __init__(self, variables: Sequence[str], lower: Sequence[Sequence[Expr]],
                 blocks: Sequence[Sequence[int]] | None = None):
        self.variables = tuple(variables)
        self.n = len(self.variables)
        self.lower = tuple(tuple(ex.as_expr(e) for e in row) for row in lower)
        if blocks is None:
            blocks = [list(range(self.n))]
        self.blocks = tuple(tuple(b) for b in blocks)
        if len(self.lower) != self.n or any(len(row) != self.n for row in self.lower):
            raise SpecError("metric matrix has the wrong shape")

    @cached_property
    def inverse(self) -> tuple[tuple[Expr, ...], ...]:
        inv = [[ex.ZERO] * self.n for _ in range(self.n)]
        for b in self.blocks:
            if len(b) > MAX_SYMBOLIC_BLOCK:
                raise SpecError(f"symbolic inverse limited to blocks of size {MAX_SYMBOLIC_BLOCK}")
            sub = [[self.lower[i][j] for j in b] for i in b]
            sub_inv = inverse_expr(sub)
            for p, i in enumerate(b):
                for q, j in enumerate(b):
                    inv[i][j] = sub_inv[p][q]
        return tuple(tuple(row) for row in inv)

    @cached_property
    def det(self) -> Expr:
        total = ex.ONE
        for b in self.blocks:
            total = ex.mul(total, det_expr([[self.lower[i][j] for j in b] for i in b]))
        return total

    @cached_property
    def sqrt_det(self) -> Expr:
        return ex.sqrt(self.det)

    def scaled(self, factor: Expr) -> "MetricField":
        return MetricField(self.variables, [[ex.mul(factor, e) for e in row] for row in self.lower], self.blocks)


# ---------------------------------------------------------------------------
# the specification


@dataclass(frozen=True, eq=False)
class PainleveSpec:
    chart: Chart
    stackel: tuple[tuple[Expr, ...], ...]
    block_metrics: tuple[tuple[tuple[Expr, ...], ...], ...]
    tests: tuple[Expr, ...] = ()
    conformal: ConformalData | None = None
    name: str = "spec"

    def __post_init__(self):
        r = self.chart.r
        if len(self.stackel) != r or any(len(row) != r for row in self.stackel):
            raise SpecError(f"the Stäckel matrix must be {r}x{r}")
        if len(self.block_metrics) != r:
            raise SpecError(f"expected {r} block metrics")
        for a, (G, size) in enumerate(zip(self.block_metrics, self.chart.sizes)):
            if len(G) != size or any(len(row) != size for row in G):
                raise SpecError(f"block metric {a + 1} must be {size}x{size}")
        if self.conformal is not None and len(self.conformal.phi) != r:
            raise SpecError(f"conformal data needs {r} block functions")

    @classmethod
    def make(cls, blocks, domain, stackel, block_metrics, tests=(), conformal=None, name="spec"):
        conv = ex.as_expr
        return cls(
            chart=Chart.make(blocks, domain),
            stackel=tuple(tuple(conv(e) for e in row) for row in stackel),
            block_metrics=tuple(tuple(tuple(conv(e) for e in row) for row in G) for G in block_metrics),
            tests=tuple(conv(e) for e in tests),
            conformal=conformal,
            name=name,
        )

    def replace(self, **changes) -> "PainleveSpec":
        fields = dict(chart=self.chart, stackel=self.stackel, block_metrics=self.block_metrics,
                      tests=self.tests, conformal=self.conformal, name=self.name)
        fields.update(changes)
        return PainleveSpec(**fields)

    # convenience ---------------------------------------------------------
    @property
    def n(self) -> int:
        return self.chart.n

    @property
    def r(self) -> int:
        return self.chart.r

    @property
    def variables(self) -> tuple[str, ...]:
        return self.chart.variables

    def binding(self, x) -> dict[str, float]:
        if isinstance(x, Mapping):
            return {v: float(x[v]) for v in self.variables}
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise SpecError(f"point must have {self.n} coordinates")
        return dict(zip(self.variables, x.tolist()))

    def point(self, x) -> np.ndarray:
        if isinstance(x, Mapping):
            return np.array([float(x[v]) for v in self.variables])
        return np.asarray(x, dtype=float)

    # symbolic Stäckel data -----------------------------------------------
    @cached_property
    def det_s(self) -> Expr:
        return det_expr(self.stackel)

    @cached_property
    def cofactors(self) -> tuple[tuple[Expr, ...], ...]:
        return tuple(tuple(row) for row in cofactor_matrix(self.stackel))

    @cached_property
    def block_factors(self) -> tuple[Expr, ...]:
        """``det S / s^{a1}``: the conformal factor multiplying ``G_a``."""
        return tuple(ex.div(self.det_s, self.cofactors[a][0]) for a in range(self.r))

    @cached_property
    def inverse_block_factors(self) -> tuple[Expr, ...]:
        """``s^{a1} / det S``: the weight of block ``a`` in the inverse metric."""
        return tuple(ex.div(self.cofactors[a][0], self.det_s) for a in range(self.r))

    @cached_property
    def block_inverses(self) -> tuple:
        out = []
        for a, G in enumerate(self.block_metrics):
            if len(G) > MAX_SYMBOLIC_BLOCK:
                raise SpecError(f"block {a + 1} exceeds the symbolic size limit {MAX_SYMBOLIC_BLOCK}")
            out.append(tuple(tuple(row) for row in inverse_expr(G)))
        return tuple(out)

    @cached_property
    def block_dets(self) -> tuple[Expr, ...]:
        return tuple(det_expr(G) for G in self.block_metrics)

    @cached_property
    def metric_field(self) -> MetricField:
        n = self.n
        lower = [[ex.ZERO] * n for _ in range(n)]
        for a, G in enumerate(self.block_metrics):
            idx = self.chart.block_indices(a)
            for p, i in enumerate(idx):
                for q, j in enumerate(idx):
                    lower[i][j] = ex.mul(self.block_factors[a], G[p][q])
        field_ = MetricField(self.variables, lower, [self.chart.block_indices(a) for a in range(self.r)])
        return field_

    @cached_property
    def inverse_metric(self) -> tuple[tuple[Expr, ...], ...]:
        n = self.n
        inv = [[ex.ZERO] * n for _ in range(n)]
        for a in range(self.r):
            idx = self.chart.block_indices(a)
            Ginv = self.block_inverses[a]
            for p, i in enumerate(idx):
                for q, j in enumerate(idx):
                    inv[i][j] = ex.mul(self.inverse_block_factors[a], Ginv[p][q])
        return tuple(tuple(row) for row in inv)

    @cached_property
    def det_g(self) -> Expr:
        total = ex.ONE
        for a, size in enumerate(self.chart.sizes):
            total = ex.mul(total, ex.mul(ex.power(self.block_factors[a], ex.const(size)), self.block_dets[a]))
        return total


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    point: tuple[float, ...] | None = None


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    points_checked: int = 0

    @property
    def valid(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.valid


def _leading_minors(G: np.ndarray) -> list[float]:
    return [float(np.linalg.det(G[:k, :k])) for k in range(1, G.shape[0] + 1)]


def validate_spec(spec: PainleveSpec, samples: int = 128, seed: int = 0) -> ValidationReport:
    """Structural and sampled checks of the Painlevé conditions.

    Violations are returned as data; an empty list means the spec is
    valid on the sampled points.
    """
    report = ValidationReport()
    chart = spec.chart
    for a, row in enumerate(spec.stackel):
        allowed = set(chart.blocks[a])
        for b, entry in enumerate(row):
            extra = sorted(entry.free - allowed)
            if extra:
                report.violations.append(Violation(
                    "row-dependence", f"s_{a + 1}{b + 1} depends on {', '.join(extra)} outside group {a + 1}"))
    for a, G in enumerate(spec.block_metrics):
        allowed = set(chart.blocks[a])
        for i, j in itertools.product(range(len(G)), repeat=2):
            extra = sorted(G[i][j].free - allowed)
            if extra and i <= j:
                report.violations.append(Violation(
                    "block-dependence", f"G_{a + 1}[{i + 1},{j + 1}] depends on {', '.join(extra)}"))
    if report.violations:
        return report

    r = spec.r
    exprs = [spec.det_s] + [spec.cofactors[a][0] for a in range(r)]
    exprs += [G[i][j] for G in spec.block_metrics for i in range(len(G)) for j in range(len(G))]
    fn = ex.compile_exprs(exprs, spec.variables)
    points = validation_points(chart, samples, seed)
    report.points_checked = len(points)
    for x in points:
        where = tuple(float(v) for v in x)
        try:
            vals = fn(x.tolist())
        except ex.EvaluationError as err:
            report.violations.append(Violation("evaluation", str(err), where))
            continue
        det, cof1 = vals[0], vals[1:1 + r]
        offset = 1 + r
        if det == 0.0:
            report.violations.append(Violation("singular", "det S vanishes", where))
            continue
        for a in range(r):
            if cof1[a] == 0.0 or det / cof1[a] <= 0.0:
                report.violations.append(Violation(
                    "positivity", f"det S / s^{a + 1}1 is not positive", where))
        for a, size in enumerate(chart.sizes):
            G = np.array(vals[offset:offset + size * size]).reshape(size, size)
            offset += size * size
            if not np.allclose(G, G.T, rtol=1e-14, atol=0.0):
                report.violations.append(Violation("symmetry", f"G_{a + 1} is not symmetric", where))
            elif min(_leading_minors(G)) <= 0.0:
                report.violations.append(Violation(
                    "definiteness", f"G_{a + 1} is not positive definite", where))
    return report


# ---------------------------------------------------------------------------
# pointwise evaluation


@dataclass(frozen=True)
class StackelValues:
    S: np.ndarray
    det: float
    cofactors: np.ndarray


def stackel_eval(spec: PainleveSpec, p) -> StackelValues:
    """Numeric Stäckel matrix, determinant and cofactors at ``p``."""
    r = spec.r
    exprs = [e for row in spec.stackel for e in row] + [spec.det_s]
    exprs += [e for row in spec.cofactors for e in row]
    vals = ex.compile_exprs(exprs, spec.variables)(spec.point(p).tolist())
    S = np.array(vals[:r * r]).reshape(r, r)
    det = vals[r * r]
    cof = np.array(vals[r * r + 1:]).reshape(r, r)
    scale = max(1.0, float(np.max(np.abs(S))) ** r)
    if abs(det) <= 1e-14 * scale:
        raise NumericalError("singular Stäckel matrix", spec.point(p))
    mismatch = S @ cof.T - det * np.eye(r)
    if np.max(np.abs(mismatch)) > 1e-12 * scale:
        raise NumericalError("cofactors inconsistent with det S", spec.point(p))
    return StackelValues(S, det, cof)


def _derivative_arrays(entries: Sequence[Expr], shape: tuple, variables: Sequence[str],
                       x: Sequence[float], order: int) -> list[np.ndarray]:
    """Values and all partials up to ``order`` of a stack of Exprs.

    Returns a list whose k-th element has shape ``shape + (n,)*k``.
    """
    n = len(variables)
    layers = [list(entries)]
    for _ in range(order):
        layers.append([ex.differentiate(e, v) for e in layers[-1] for v in variables])
    flat = [e for layer in layers for e in layer]
    vals = ex.compile_exprs(flat, variables)(list(x))
    out, start = [], 0
    for k, layer in enumerate(layers):
        out.append(np.array(vals[start:start + len(layer)]).reshape(shape + (n,) * k))
        start += len(layer)
    return out


@dataclass(frozen=True)
class MetricJet:
    point: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    det: float
    sqrt_det: float
    g_derivs: list[np.ndarray]
    S_derivs: list[np.ndarray]
    det_s_derivs: list[np.ndarray]
    cofactor_derivs: list[np.ndarray]


def metric_at(spec: PainleveSpec, p, order: int = 0) -> MetricJet:
    """Metric, inverse, determinant and partials up to ``order`` at ``p``."""
    if not 0 <= order <= 3:
        raise ValueError("order must be between 0 and 3")
    x = spec.point(p)
    n, r = spec.n, spec.r
    stack = stackel_eval(spec, x)
    factors = stack.det / stack.cofactors[:, 0]
    if np.any(factors <= 0):
        raise NumericalError("det S / s^{a1} is not positive", x)
    lower = [e for row in spec.metric_field.lower for e in row]
    g_derivs = _derivative_arrays(lower, (n, n), spec.variables, x, order)
    g = g_derivs[0]
    g_inv = np.zeros((n, n))
    det = 1.0
    for a in range(r):
        idx = spec.chart.block_indices(a)
        block = g[np.ix_(idx, idx)]
        g_inv[np.ix_(idx, idx)] = np.linalg.inv(block)
        det *= float(np.linalg.det(block))
    if det <= 0:
        raise NumericalError("metric determinant is not positive", x)
    S_derivs = _derivative_arrays([e for row in spec.stackel for e in row], (r, r), spec.variables, x, order)
    det_s_derivs = _derivative_arrays([spec.det_s], (), spec.variables, x, order)
    cof_derivs = _derivative_arrays([e for row in spec.cofactors for e in row], (r, r), spec.variables, x, order)
    return MetricJet(x, g, g_inv, det, math.sqrt(det), g_derivs, S_derivs, det_s_derivs, cof_derivs)


@dataclass(frozen=True)
class MetricExprs:
    lower: tuple[tuple[Expr, ...], ...]
    inverse: tuple[tuple[Expr, ...], ...]
    det: Expr
    sqrt_det: Expr


def metric_exprs(spec: PainleveSpec) -> MetricExprs:
    """Symbolic metric, inverse, determinant and its square root."""
    for a, size in enumerate(spec.chart.sizes):
        if size > MAX_SYMBOLIC_BLOCK:
            raise SpecError(f"block {a + 1} has size {size}; symbolic inverse supports at most {MAX_SYMBOLIC_BLOCK}")
    return MetricExprs(spec.metric_field.lower, spec.inverse_metric, spec.det_g, ex.sqrt(spec.det_g))


# ---------------------------------------------------------------------------
# jets of the Stäckel data used by the closed-form identities


@dataclass(frozen=True)
class StackelJet:
    """det S and all cofactors with gradients and Hessians at a point."""

    det: float
    det_grad: np.ndarray
    det_hess: np.ndarray
    cof: np.ndarray        # (r, r)
    cof_grad: np.ndarray   # (r, r, n)
    cof_hess: np.ndarray   # (r, r, n, n)


def stackel_jet(spec: PainleveSpec, p) -> StackelJet:
    x = spec.point(p)
    r = spec.r
    d = _derivative_arrays([spec.det_s], (), spec.variables, x, 2)
    c = _derivative_arrays([e for row in spec.cofactors for e in row], (r, r), spec.variables, x, 2)
    return StackelJet(float(d[0]), d[1], d[2], c[0], c[1], c[2])
