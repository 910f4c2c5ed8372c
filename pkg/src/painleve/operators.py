"""Second-order operators built from a Painlevé metric.

Covers the Laplace-Beltrami operator (generic divergence form and the
block form read off the Stäckel data), the one-group operators B_β, the
symmetry operators Δ_{K(α)}, the Robertson coefficients γ and the
commutator test used to certify that the symmetry operators commute.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import expr as ex
from .expr import Expr
from .errors import SpecError
from .killing import killing_tensors
from .sampling import corner_points, halton_points
from .stackel import MetricField, PainleveSpec, stackel_jet
from .tolerances import tolerance

DEFAULT_NODE_BUDGET = 2_000_000

_GAMMA = weakref.WeakKeyDictionary()
_OPS = weakref.WeakKeyDictionary()


def _memo(spec, key, build):
    table = _OPS.setdefault(spec, {})
    if key not in table:
        table[key] = build()
    return table[key]


@dataclass(frozen=True, eq=False)
class DifferentialOperator:
    """``L u = a^{ij} ∂_i∂_j u + b^i ∂_i u + c u`` with Expr coefficients."""

    variables: tuple[str, ...]
    a: tuple[tuple[Expr, ...], ...]
    b: tuple[Expr, ...]
    c: Expr = ex.ZERO
    name: str = "L"

    def __post_init__(self):
        n = len(self.variables)
        if len(self.a) != n or any(len(row) != n for row in self.a) or len(self.b) != n:
            raise SpecError(f"operator {self.name}: coefficient shapes do not match {n} variables")
        for i in range(n):
            for j in range(i):
                if self.a[i][j] is not self.a[j][i]:
                    raise SpecError(f"operator {self.name}: second-order coefficients are not symmetric")

    @classmethod
    def make(cls, variables, a, b, c=ex.ZERO, name="L") -> "DifferentialOperator":
        n = len(variables)
        a = [list(row) for row in a]
        for i in range(n):
            for j in range(i):
                a[i][j] = a[j][i]
        return cls(tuple(variables), tuple(tuple(row) for row in a), tuple(b), c, name)

    @property
    def n(self) -> int:
        return len(self.variables)

    def coefficients(self) -> list[Expr]:
        return [self.a[i][j] for i in range(self.n) for j in range(self.n)] + list(self.b) + [self.c]

    def free_variables(self) -> frozenset:
        return frozenset().union(*(e.free for e in self.coefficients()))

    def apply(self, u: Expr) -> Expr:
        n, vs = self.n, self.variables
        terms = []
        first = [ex.differentiate(u, v) for v in vs]
        for i in range(n):
            for j in range(i, n):
                aij = self.a[i][j]
                if aij is ex.ZERO:
                    continue
                d2 = ex.differentiate(first[i], vs[j])
                weight = aij if i == j else ex.mul(ex.const(2.0), aij)
                terms.append(ex.mul(weight, d2))
        terms += [ex.mul(self.b[i], first[i]) for i in range(n) if self.b[i] is not ex.ZERO]
        if self.c is not ex.ZERO:
            terms.append(ex.mul(self.c, u))
        return ex.sum_exprs(terms)

    def at(self, u: Expr, x) -> float:
        return ex.compile_exprs([self.apply(u)], self.variables)(list(np.asarray(x, dtype=float)))[0]

    def apply_values(self, x, u: float, grad, hess) -> float:
        """``L u`` at ``x`` given numeric value, gradient and Hessian of u there."""
        n = self.n
        vals = np.array(ex.compile_exprs(self.coefficients(), self.variables)(list(np.asarray(x, dtype=float))))
        return float(np.einsum("ij,ij", vals[:n * n].reshape(n, n), hess) + vals[n * n:n * n + n] @ grad
                     + vals[-1] * u)

    def scaled(self, w: Expr, name: str | None = None) -> "DifferentialOperator":
        m = lambda e: ex.mul(w, e)
        return DifferentialOperator(self.variables, tuple(tuple(m(e) for e in row) for row in self.a),
                                    tuple(m(e) for e in self.b), m(self.c), name or self.name)

    def __add__(self, other: "DifferentialOperator") -> "DifferentialOperator":
        if self.variables != other.variables:
            raise SpecError("operators act on different coordinates")
        return DifferentialOperator(
            self.variables,
            tuple(tuple(ex.add(p, q) for p, q in zip(r1, r2)) for r1, r2 in zip(self.a, other.a)),
            tuple(ex.add(p, q) for p, q in zip(self.b, other.b)),
            ex.add(self.c, other.c), f"{self.name}+{other.name}")

    def __neg__(self) -> "DifferentialOperator":
        return self.scaled(ex.const(-1.0), f"-{self.name}")


def combine(terms: Iterable[tuple[Expr, DifferentialOperator]], name: str) -> DifferentialOperator:
    """``Σ w_k L_k`` for Expr weights ``w_k``."""
    total = None
    for w, op in terms:
        piece = op.scaled(w)
        total = piece if total is None else total + piece
    return DifferentialOperator(total.variables, total.a, total.b, total.c, name)


def _dlog(f: Expr, v: str) -> Expr:
    return ex.div(ex.differentiate(f, v), f)


def divergence_operator(variables: Sequence[str], K, det_g: Expr, name: str) -> DifferentialOperator:
    """``(1/√|g|) ∂_i(√|g| K^{ij} ∂_j)`` written in non-divergence form."""
    n = len(variables)
    half_dlog = [ex.mul(ex.const(0.5), _dlog(det_g, v)) for v in variables]
    b = []
    for j in range(n):
        terms = []
        for i in range(n):
            if K[i][j] is ex.ZERO:
                continue
            terms.append(ex.differentiate(K[i][j], variables[i]))
            terms.append(ex.mul(K[i][j], half_dlog[i]))
        b.append(ex.sum_exprs(terms))
    return DifferentialOperator.make(variables, K, b, ex.ZERO, name)


def laplacian(obj) -> DifferentialOperator:
    """Generic Laplace-Beltrami operator of a spec or any :class:`MetricField`."""
    if isinstance(obj, PainleveSpec):
        return _memo(obj, "laplacian",
                     lambda: divergence_operator(obj.variables, obj.inverse_metric, obj.det_g, "Δ_g"))
    return _memo(obj, "laplacian", lambda: divergence_operator(obj.variables, obj.inverse, obj.det, "Δ_g"))


# ---------------------------------------------------------------------------
# Robertson coefficients


def _log_gradient_of_ratio(spec: PainleveSpec, beta: int, v: str) -> Expr:
    """∂_v log((det S)^{n/2-1} s^{β1} / Π (s^{γ1})^{l_γ/2})."""
    D = spec.det_s
    terms = [ex.mul(ex.const(spec.n / 2 - 1), _dlog(D, v)), _dlog(spec.cofactors[beta][0], v)]
    for g, size in enumerate(spec.chart.sizes):
        terms.append(ex.mul(ex.const(-size / 2), _dlog(spec.cofactors[g][0], v)))
    return ex.sum_exprs(terms)


def gamma_lower_exprs(spec: PainleveSpec) -> tuple[Expr, ...]:
    """γ_i for every coordinate, i in group β: minus the log-gradient above."""
    cached = _GAMMA.get(spec)
    if cached is None:
        group = spec.chart.group_of
        lower = tuple(ex.neg(_log_gradient_of_ratio(spec, group[v], v)) for v in spec.variables)
        upper = [ex.ZERO] * spec.n
        for beta in range(spec.r):
            idx = spec.chart.block_indices(beta)
            Ginv = spec.block_inverses[beta]
            for q, j in enumerate(idx):
                upper[j] = ex.sum_exprs(ex.mul(Ginv[p][q], lower[i]) for p, i in enumerate(idx))
        cached = (lower, tuple(upper))
        _GAMMA[spec] = cached
    return cached[0]


def gamma_upper_exprs(spec: PainleveSpec) -> tuple[Expr, ...]:
    """γ^j = Σ_i (G^β)^{ij} γ_i within each group."""
    gamma_lower_exprs(spec)
    return _GAMMA[spec][1]


def gamma_lower(spec: PainleveSpec, x, i: int) -> float:
    return ex.compile_exprs(list(gamma_lower_exprs(spec)), spec.variables)(list(spec.point(x)))[i]


def gamma_upper(spec: PainleveSpec, x, j: int) -> float:
    return ex.compile_exprs(list(gamma_upper_exprs(spec)), spec.variables)(list(spec.point(x)))[j]


def big_gamma_exprs(spec: PainleveSpec) -> tuple[Expr, ...]:
    """Γ_k = -½ ∂_k log|g| - Σ_{p,h in the group of k} g_{kp} ∂_h g^{hp}."""
    g, ginv = spec.metric_field.lower, spec.inverse_metric
    out = []
    for k, v in enumerate(spec.variables):
        idx = spec.chart.block_indices(spec.chart.group_of[v])
        terms = [ex.mul(ex.const(-0.5), _dlog(spec.det_g, v))]
        for p in idx:
            for h in idx:
                terms.append(ex.neg(ex.mul(g[k][p], ex.differentiate(ginv[h][p], spec.variables[h]))))
        out.append(ex.sum_exprs(terms))
    return tuple(out)


def mixed_log_hessian(spec: PainleveSpec, x) -> np.ndarray:
    """∂_j∂_k log((det S)^{n-2} / Π (s^{γ1})^{l_γ}) from jets of det S and the cofactors."""
    jet = stackel_jet(spec, x)
    dd = lambda f, df, hf: hf / f - np.outer(df, df) / f ** 2
    out = (spec.n - 2) * dd(jet.det, jet.det_grad, jet.det_hess)
    for g, size in enumerate(spec.chart.sizes):
        out = out - size * dd(jet.cof[g, 0], jet.cof_grad[g, 0], jet.cof_hess[g, 0])
    return out


@dataclass(frozen=True)
class RobertsonEntry:
    alpha: int  # group of the differentiation variable (1-based)
    beta: int   # group of γ's index (1-based)
    i: int      # index of γ_i, in group β
    j: int      # differentiation index, in group α
    max_residual: float
    worst_point: tuple


@dataclass(frozen=True)
class RobertsonReport:
    entries: tuple[RobertsonEntry, ...]
    differential_max: float
    differential_worst: RobertsonEntry | None
    algebraic_max: float
    algebraic_worst_point: tuple | None
    algebraic_worst_pair: tuple | None
    tolerance: float
    sample_count: int
    seed: int

    @property
    def differential_pass(self) -> bool:
        return self.differential_max < self.tolerance

    @property
    def algebraic_pass(self) -> bool:
        return self.algebraic_max < self.tolerance

    @property
    def verdicts_agree(self) -> bool:
        return self.differential_pass == self.algebraic_pass

    @property
    def passed(self) -> bool:
        return self.differential_pass and self.algebraic_pass


def robertson_points(spec: PainleveSpec, samples: int = 64, seed: int = 0) -> np.ndarray:
    return np.vstack([halton_points(spec.chart, samples, seed), corner_points(spec.chart)])


def robertson_check(spec: PainleveSpec, tol: float | None = None, samples: int = 64,
                    seed: int = 0) -> RobertsonReport:
    """Both Robertson formulations over a Halton sample plus the box corners.

    The differential family is |∂_j γ_i| for i, j in different groups,
    obtained by differentiating the symbolic γ.  The algebraic family is
    |∂_j∂_k log((det S)^{n-2}/Π(s^{γ1})^{l_γ})| from jets of the Stäckel data.
    """
    tol = tolerance("single_derivative") if tol is None else tol
    pts = robertson_points(spec, samples, seed)
    group = [spec.chart.group_of[v] for v in spec.variables]
    gam = gamma_lower_exprs(spec)
    pairs = [(i, j) for i in range(spec.n) for j in range(spec.n) if group[i] != group[j]]
    prog = ex.compile_exprs([ex.differentiate(gam[i], spec.variables[j]) for i, j in pairs], spec.variables)
    best = np.zeros(len(pairs))
    where = [None] * len(pairs)
    alg, alg_at, alg_pair = 0.0, None, None
    for x in pts:
        vals = np.abs(np.array(prog(list(x))))
        for t, v in enumerate(vals):
            if v > best[t] or where[t] is None:
                best[t], where[t] = v, tuple(float(c) for c in x)
        H = np.abs(mixed_log_hessian(spec, x))
        for i, j in pairs:
            if H[i, j] > alg or alg_at is None:
                alg, alg_at, alg_pair = float(H[i, j]), tuple(float(c) for c in x), (i, j)
    entries = tuple(RobertsonEntry(group[j] + 1, group[i] + 1, i, j, float(best[t]), where[t])
                    for t, (i, j) in enumerate(pairs))
    worst = max(entries, key=lambda e: e.max_residual) if entries else None
    return RobertsonReport(entries, worst.max_residual if worst else 0.0, worst, alg, alg_at, alg_pair,
                           tol, len(pts), seed)


def big_gamma_cross_max(spec: PainleveSpec, points) -> float:
    """max |∂_j Γ_k| over ``points`` for j, k in different groups."""
    group = [spec.chart.group_of[v] for v in spec.variables]
    big = big_gamma_exprs(spec)
    derivs = [ex.differentiate(big[k], spec.variables[j])
              for k in range(spec.n) for j in range(spec.n) if group[j] != group[k]]
    if not derivs:
        return 0.0
    prog = ex.compile_exprs(derivs, spec.variables)
    return max(float(np.max(np.abs(prog(list(x))))) for x in np.atleast_2d(points))


# ---------------------------------------------------------------------------
# block form and group operators


def block_laplacian_op(spec: PainleveSpec, beta: int) -> DifferentialOperator:
    """Δ_{G_β} acting on the coordinates of group β (1-based label)."""
    n, b0 = spec.n, beta - 1
    idx = spec.chart.block_indices(b0)
    Ginv = spec.block_inverses[b0]
    K = [[ex.ZERO] * n for _ in range(n)]
    for p, i in enumerate(idx):
        for q, j in enumerate(idx):
            K[i][j] = Ginv[p][q]
    return divergence_operator(spec.variables, K, spec.block_dets[b0], f"Δ_G{beta}")


def laplacian_block(spec: PainleveSpec) -> DifferentialOperator:
    """Σ_β (s^{β1}/det S) {Δ_{G_β} + (G^β)^{ij} [∂_i log((det S)^{n/2-1} s^{β1} / Π (s^{γ1})^{l_γ/2})] ∂_j}."""
    return _memo(spec, "laplacian_block", lambda: _laplacian_block(spec))


def _laplacian_block(spec: PainleveSpec) -> DifferentialOperator:
    terms = []
    for b0 in range(spec.r):
        lap = block_laplacian_op(spec, b0 + 1)
        idx = spec.chart.block_indices(b0)
        Ginv = spec.block_inverses[b0]
        drift = [ex.ZERO] * spec.n
        for q, j in enumerate(idx):
            drift[j] = ex.sum_exprs(ex.mul(Ginv[p][q], _log_gradient_of_ratio(spec, b0, spec.variables[i]))
                                    for p, i in enumerate(idx))
        inner = DifferentialOperator(lap.variables, lap.a, tuple(ex.add(u, w) for u, w in zip(lap.b, drift)))
        terms.append((spec.inverse_block_factors[b0], inner))
    return combine(terms, "Δ_g(block)")


def b_operator(spec: PainleveSpec, beta: int) -> DifferentialOperator:
    """B_β = -Δ_{G_β} + γ^j ∂_j over group β."""
    return _memo(spec, ("B", beta), lambda: _b_operator(spec, beta))


def _b_operator(spec: PainleveSpec, beta: int) -> DifferentialOperator:
    lap = block_laplacian_op(spec, beta)
    up = gamma_upper_exprs(spec)
    idx = set(spec.chart.block_indices(beta - 1))
    b = tuple(ex.add(ex.neg(lap.b[j]), up[j]) if j in idx else ex.ZERO for j in range(spec.n))
    a = tuple(tuple(ex.neg(e) for e in row) for row in lap.a)
    return DifferentialOperator(spec.variables, a, b, ex.ZERO, f"B{beta}")


@dataclass(frozen=True)
class LocalityCheck:
    local: bool
    route: str  # "structural" or "numeric"
    max_cross_derivative: float


def b_operator_locality(spec: PainleveSpec, beta: int, tol: float | None = None,
                        samples: int = 64, seed: int = 0) -> LocalityCheck:
    """Whether the coefficients of B_β depend only on group β.

    Free variables decide when they already lie in the group.  Otherwise
    the derivatives of every coefficient in the off-group variables are
    evaluated on the sample set, since the simplifier does not cancel
    every identity among the cofactors.
    """
    tol = tolerance("single_derivative") if tol is None else tol
    op = b_operator(spec, beta)
    block = {spec.variables[i] for i in spec.chart.block_indices(beta - 1)}
    if op.free_variables() <= block:
        return LocalityCheck(True, "structural", 0.0)
    outside = [v for v in spec.variables if v not in block]
    derivs = [ex.differentiate(e, v) for e in op.coefficients() for v in outside]
    prog = ex.compile_exprs(derivs, spec.variables)
    worst = max(float(np.max(np.abs(prog(list(x))))) for x in robertson_points(spec, samples, seed))
    return LocalityCheck(worst < tol, "numeric", worst)


def b_operator_is_local(spec: PainleveSpec, beta: int) -> bool:
    return b_operator_locality(spec, beta).local


def symmetry_operator(spec: PainleveSpec, alpha: int) -> DifferentialOperator:
    """Δ_{K(α)} = ∇_i(K_(α)^{ij} ∇_j)."""
    K = killing_tensors(spec).of(alpha)
    return _memo(spec, ("sym", alpha), lambda: divergence_operator(spec.variables, K, spec.det_g, f"Δ_K{alpha}"))


def t_operator(spec: PainleveSpec, alpha: int) -> DifferentialOperator:
    """T_α = Σ_β (s^{βα}/det S) B_β.  Under the Robertson conditions T_α = -Δ_{K(α)}."""
    return _memo(spec, ("T", alpha), lambda: _t_operator(spec, alpha))


def _t_operator(spec: PainleveSpec, alpha: int) -> DifferentialOperator:
    terms = [(ex.div(spec.cofactors[b][alpha - 1], spec.det_s), b_operator(spec, b + 1)) for b in range(spec.r)]
    return combine(terms, f"T{alpha}")


# ---------------------------------------------------------------------------
# commutators


class _Jet2:
    """Value, gradient and Hessian of a scalar at a point."""

    __slots__ = ("v", "g", "h")

    def __init__(self, v, g, h):
        self.v, self.g, self.h = v, g, h


def _derivative_stack(exprs: Sequence[Expr], variables: Sequence[str], x, order: int) -> list[np.ndarray]:
    n = len(variables)
    layers = [list(exprs)]
    for _ in range(order):
        layers.append([ex.differentiate(e, v) for e in layers[-1] for v in variables])
    flat = [e for layer in layers for e in layer]
    vals = ex.compile_exprs(flat, variables)(list(x))
    out, start = [], 0
    for k, layer in enumerate(layers):
        out.append(np.array(vals[start:start + len(layer)]).reshape((len(exprs),) + (n,) * k))
        start += len(layer)
    return out


def _apply_jet(op: DifferentialOperator, U: list[np.ndarray], x) -> _Jet2:
    """2-jet of ``op u`` at ``x`` from the 4-jet ``U`` of u."""
    n = op.n
    C = _derivative_stack(op.coefficients(), op.variables, x, 2)
    A0, A1, A2 = (c[:n * n].reshape((n, n) + c.shape[1:]) for c in C)
    B0, B1, B2 = (c[n * n:n * n + n] for c in C)
    c0, c1, c2 = (c[-1] for c in C)
    u0, u1, u2, u3, u4 = U
    v = np.einsum("ij,ij", A0, u2) + B0 @ u1 + c0 * u0
    g = (np.einsum("ij,ijm->m", A0, u3) + np.einsum("ijm,ij->m", A1, u2)
         + B0 @ u2 + np.einsum("im,i->m", B1, u1) + c0 * u1 + c1 * u0)
    h = (np.einsum("ij,ijml->ml", A0, u4) + np.einsum("ijml,ij->ml", A2, u2)
         + np.einsum("ijm,ijl->ml", A1, u3) + np.einsum("ijm,ijl->lm", A1, u3)
         + np.einsum("i,iml->ml", B0, u3) + np.einsum("iml,i->ml", B2, u1)
         + np.einsum("im,il->ml", B1, u2) + np.einsum("im,il->lm", B1, u2)
         + c0 * u2 + c2 * u0 + np.outer(c1, u1) + np.outer(u1, c1))
    return _Jet2(v, g, h)


def _apply_to_jet(op: DifferentialOperator, J: _Jet2, x) -> float:
    n = op.n
    vals = np.array(ex.compile_exprs(op.coefficients(), op.variables)(list(x)))
    A = vals[:n * n].reshape(n, n)
    B = vals[n * n:n * n + n]
    return float(np.einsum("ij,ij", A, J.h) + B @ J.g + vals[-1] * J.v)


def _u_jet(u: Expr, variables: Sequence[str], x) -> list[np.ndarray]:
    return [a[0] for a in _derivative_stack([u], variables, x, 4)]


@dataclass(frozen=True)
class CommutatorResult:
    residual: float
    scale: float
    path: str  # "symbolic" or "jet"

    def __float__(self) -> float:
        return self.residual


def _symbolic_pair(A, B, u, budget):
    with ex.node_budget(budget):
        ab = A.apply(B.apply(u))
        ba = B.apply(A.apply(u))
    return ex.compile_exprs([ab, ba], A.variables)


_SYMBOLIC: dict = {}


def commutator_residual(A: DifferentialOperator, B: DifferentialOperator, u: Expr, x,
                        node_limit: int = DEFAULT_NODE_BUDGET, path: str = "auto") -> CommutatorResult:
    """|A(Bu) - B(Au)| at ``x`` with the scale ``1 + max(|A(Bu)|, |B(Au)|)``.

    ``path="auto"`` composes symbolically and falls back to order-4 jets
    if the composed expression would exceed ``node_limit`` new nodes.
    """
    x = np.asarray(x, dtype=float)
    if path not in ("auto", "symbolic", "jet"):
        raise ValueError("path must be auto, symbolic or jet")
    if path != "jet":
        key = (id(A), id(B), id(u), node_limit)
        prog = _SYMBOLIC.get(key)
        if prog is None:
            try:
                prog = _symbolic_pair(A, B, u, node_limit)
            except ex.ExpressionTooLarge:
                if path == "symbolic":
                    raise
                prog = False
            _SYMBOLIC[key] = prog
            # keep the keyed objects alive alongside their program
            _SYMBOLIC[("keep",) + key] = (A, B, u)
        if prog:
            ab, ba = prog(list(x))
            return CommutatorResult(abs(ab - ba), 1.0 + max(abs(ab), abs(ba)), "symbolic")
    U = _u_jet(u, A.variables, x)
    ab = _apply_to_jet(A, _apply_jet(B, U, x), x)
    ba = _apply_to_jet(B, _apply_jet(A, U, x), x)
    return CommutatorResult(abs(ab - ba), 1.0 + max(abs(ab), abs(ba)), "jet")


def operator_gap(L1: DifferentialOperator, L2: DifferentialOperator, u: Expr, x) -> float:
    """|L1 u - L2 u| at ``x``."""
    prog = ex.compile_exprs([L1.apply(u), L2.apply(u)], L1.variables)
    a, b = prog(list(np.asarray(x, dtype=float)))
    return abs(a - b)
