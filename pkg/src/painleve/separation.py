"""Block-separated solutions of the Hamilton-Jacobi and Helmholtz equations.

Size-one blocks are solved here: Hamilton-Jacobi by quadrature, Helmholtz
by an ODE solve.  Larger blocks take closed-form solutions supplied by the
caller, and the module only checks the residuals.  The sign convention
throughout is ``-Δ_g u = λ u`` with ``a_1 = λ``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp
from scipy.interpolate import CubicSpline

from . import expr as ex
from .errors import NumericalError, SpecError
from .expr import Expr
from .operators import b_operator, gamma_upper_exprs, laplacian, symmetry_operator
from .stackel import PainleveSpec


@dataclass(frozen=True)
class SeparationConstants:
    values: tuple[float, ...]

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.values):
            raise SpecError("separation constants must be finite")

    @classmethod
    def of(cls, a) -> "SeparationConstants":
        return a if isinstance(a, SeparationConstants) else cls(tuple(float(v) for v in a))

    @property
    def a1(self) -> float:
        return self.values[0]

    def shifted(self, index: int, step: float) -> "SeparationConstants":
        vals = list(self.values)
        vals[index] += step
        return SeparationConstants(tuple(vals))

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


@dataclass(frozen=True, eq=False)
class BlockSolution:
    """One factor of a separated solution.

    Either sampled on a grid over a single coordinate (``grid``, ``u``,
    ``du``, ``d2u``) or a closed-form Expr over the block's coordinates.
    """

    beta: int
    variables: tuple[str, ...]
    grid: np.ndarray | None = None
    u: np.ndarray | None = None
    du: np.ndarray | None = None
    d2u: np.ndarray | None = None
    expr: Expr | None = None
    zero_crossings: tuple[float, ...] = ()

    @classmethod
    def closed_form(cls, beta: int, variables: Sequence[str], e: Expr | str) -> "BlockSolution":
        e = ex.as_expr(e) if not isinstance(e, str) else ex.parse(e)
        if not e.free <= set(variables):
            raise SpecError(f"block {beta} solution depends on {sorted(e.free - set(variables))}")
        return cls(beta, tuple(variables), expr=e)

    @property
    def sampled(self) -> bool:
        return self.expr is None

    @property
    def interval(self) -> tuple[float, float] | None:
        return None if self.grid is None else (float(self.grid[0]), float(self.grid[-1]))

    @cached_property
    def spline(self) -> CubicSpline:
        return CubicSpline(self.grid, self.u, bc_type="not-a-knot")

    @cached_property
    def _program(self):
        e, vs = self.expr, list(self.variables)
        grad = [ex.differentiate(e, v) for v in vs]
        hess = [ex.differentiate(g, v) for g in grad for v in vs]
        return ex.compile_exprs([e] + grad + hess, vs)

    def jet(self, coords) -> tuple[float, np.ndarray, np.ndarray]:
        """Value, gradient and Hessian in the block's own coordinates."""
        coords = np.atleast_1d(np.asarray(coords, dtype=float))
        if self.sampled:
            t = float(coords[0])
            lo, hi = self.interval
            if not lo - 1e-12 <= t <= hi + 1e-12:
                raise NumericalError(f"{self.variables[0]} = {t} outside the solved interval [{lo}, {hi}]")
            s = self.spline
            return float(s(t)), np.array([s(t, 1)]), np.array([[s(t, 2)]])
        l = len(self.variables)
        vals = np.array(self._program(list(coords)))
        return float(vals[0]), vals[1:1 + l], vals[1 + l:].reshape(l, l)

    def to_csv(self, path) -> None:
        if not self.sampled:
            raise ValueError("only sampled block solutions have a grid to export")
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([self.variables[0], "u", "du", "d2u"])
            for row in zip(self.grid, self.u, self.du, self.d2u):
                w.writerow([repr(float(v)) for v in row])


def _size_one_block(spec: PainleveSpec, beta: int) -> tuple[int, str]:
    if not 1 <= beta <= spec.r:
        raise SpecError(f"block label {beta} outside 1..{spec.r}")
    idx = spec.chart.block_indices(beta - 1)
    if len(idx) != 1:
        raise SpecError(f"block {beta} has {len(idx)} coordinates; only size-1 blocks are solved here")
    return idx[0], spec.variables[idx[0]]


def _line_program(spec: PainleveSpec, exprs: Sequence[Expr], j: int):
    """Evaluate ``exprs`` along coordinate ``j`` with the others frozen at the box centre.

    Used only for quantities that depend on the block coordinate alone.
    """
    prog = ex.compile_exprs(list(exprs), spec.variables)
    base = spec.chart.center().tolist()

    def at(t: float) -> tuple:
        x = list(base)
        x[j] = t
        return prog(x)

    return at


# ---------------------------------------------------------------------------
# Hamilton-Jacobi


def hj_block_quadrature(spec: PainleveSpec, alpha: int, a, interval=None, panels: int = 512) -> BlockSolution:
    """W_α with W_α' = +sqrt(G_α Σ_β s_{αβ} a_β), integrated by composite Simpson."""
    if panels < 512 or panels % 2:
        raise ValueError("use an even number of at least 512 panels")
    a = SeparationConstants.of(a)
    j, v = _size_one_block(spec, alpha)
    lo, hi = interval or spec.chart.interval(v)
    row = spec.stackel[alpha - 1]
    radicand = ex.mul(spec.block_metrics[alpha - 1][0][0],
                      ex.sum_exprs(ex.mul(row[b], ex.const(a.values[b])) for b in range(spec.r)))
    line = _line_program(spec, [radicand, ex.differentiate(radicand, v)], j)
    xs = np.linspace(lo, hi, panels + 1)
    rad = np.array([line(t) for t in xs])
    bad = np.nonzero(rad[:, 0] < 0)[0]
    if bad.size:
        raise NumericalError(f"negative radicand G_{alpha} Σ s a at {v} = {xs[bad[0]]!r}", xs[bad[0]])
    dw = np.sqrt(rad[:, 0])
    with np.errstate(divide="ignore", invalid="ignore"):
        d2w = np.where(dw > 0, rad[:, 1] / (2 * dw), np.nan)
    w = cumulative_simpson(dw, x=xs, initial=0.0)
    return BlockSolution(alpha, (v,), xs, w, dw, d2w)


def hj_residual(spec: PainleveSpec, blocks: Sequence[BlockSolution], a, points) -> float:
    """max |g^{ij} ∂_i W ∂_j W - a_1| for W = Σ W_α, derivatives from the quadrature splines."""
    a = SeparationConstants.of(a)
    prog = ex.compile_exprs([e for row in spec.inverse_metric for e in row], spec.variables)
    worst = 0.0
    for x in np.atleast_2d(points):
        grad = np.zeros(spec.n)
        for blk in blocks:
            idx = [spec.variables.index(v) for v in blk.variables]
            grad[idx] = blk.jet(x[idx])[1]
        ginv = np.array(prog(list(x))).reshape(spec.n, spec.n)
        worst = max(worst, abs(grad @ ginv @ grad - a.a1))
    return worst


def hj_rank_matrix(spec: PainleveSpec, a, probe, da: float = 1e-4, interval=None) -> np.ndarray:
    """M[α, γ] = 2 (G_α)^{-1} W_α' ∂_{a_γ} W_α' at ``probe``, with central differences in a.

    For a complete integral this reproduces the Stäckel row s_{αγ}.
    """
    a = SeparationConstants.of(a)
    probe = np.asarray(probe, dtype=float)
    Ginv = ex.compile_exprs([spec.block_inverses[b][0][0] for b in range(spec.r)], spec.variables)(list(probe))
    M = np.zeros((spec.r, spec.r))
    for al in range(spec.r):
        j, _ = _size_one_block(spec, al + 1)
        slope = lambda consts: hj_block_quadrature(spec, al + 1, consts, interval).jet([probe[j]])[1][0]
        w = slope(a)
        for g in range(spec.r):
            d = (slope(a.shifted(g, da)) - slope(a.shifted(g, -da))) / (2 * da)
            M[al, g] = 2 * Ginv[al] * w * d
    return M


# ---------------------------------------------------------------------------
# Helmholtz


def _ode_coefficients(spec: PainleveSpec, beta: int, a: SeparationConstants, j: int, v: str):
    """Callable t -> (G, γ^x - q, σ) for the block ODE u'' = G[(γ^x - q) u' - σ u]."""
    G = spec.block_metrics[beta - 1][0][0]
    Ginv = spec.block_inverses[beta - 1][0][0]
    # q = (1/√G) (√G G^{-1})' = (G^{-1})' + ½ G^{-1} G'/G
    q = ex.add(ex.differentiate(Ginv, v),
               ex.mul(ex.const(0.5), ex.mul(Ginv, ex.div(ex.differentiate(G, v), G))))
    drift = ex.sub(gamma_upper_exprs(spec)[j], q)
    sigma = ex.sum_exprs(ex.mul(spec.stackel[beta - 1][b], ex.const(a.values[b])) for b in range(spec.r))
    return _line_program(spec, [G, drift, sigma], j)


def helmholtz_block_ode(spec: PainleveSpec, beta: int, a, interval=None, x0: float | None = None,
                        u0: float = 1.0, du0: float = 0.0, nodes: int = 4001,
                        rtol: float = 1e-10) -> BlockSolution:
    """Solve B_β u = (Σ_α s_{βα} a_α) u on a size-1 block.

    In one dimension B_β u = -u''/G - q u' + γ^x u' with
    q = (1/√G)(√G/G)', which gives the ODE above.  The solution is sampled
    on ``nodes`` points and later interpolated by a not-a-knot cubic spline.
    """
    a = SeparationConstants.of(a)
    if len(a) != spec.r:
        raise SpecError(f"need {spec.r} separation constants")
    j, v = _size_one_block(spec, beta)
    lo, hi = interval or spec.chart.interval(v)
    x0 = 0.5 * (lo + hi) if x0 is None else x0
    coeff = _ode_coefficients(spec, beta, a, j, v)

    def rhs(t, y):
        G, drift, sigma = coeff(t)
        return [y[1], G * (drift * y[1] - sigma * y[0])]

    xs = np.linspace(lo, hi, nodes)
    pieces = []
    for end in (lo, hi):
        if end == x0:
            continue
        sol = solve_ivp(rhs, (x0, end), [u0, du0], method="DOP853", rtol=rtol, atol=rtol * 1e-2,
                        dense_output=True)
        if not sol.success:
            raise NumericalError(f"block {beta} ODE failed: {sol.message}")
        pieces.append((min(x0, end), max(x0, end), sol.sol))
    Y = np.empty((2, nodes))
    Y[0], Y[1] = u0, du0
    for lo_, hi_, s in pieces:
        inside = (xs >= lo_) & (xs <= hi_)
        Y[:, inside] = s(xs[inside])
    d2 = np.array([rhs(t, Y[:, k])[1] for k, t in enumerate(xs)])
    sign = np.sign(Y[0])
    crossings = tuple(float(xs[k]) for k in np.nonzero(sign[1:] * sign[:-1] <= 0)[0])
    return BlockSolution(beta, (v,), xs, Y[0], Y[1], d2, zero_crossings=crossings)


def helmholtz_separate(spec: PainleveSpec, a, nodes: int = 4001) -> list[BlockSolution]:
    return [helmholtz_block_ode(spec, b + 1, a, nodes=nodes) for b in range(spec.r)]


@dataclass(frozen=True, eq=False)
class AssembledProduct:
    """u = Π u_β with partials to second order by the product rule."""

    variables: tuple[str, ...]
    blocks: tuple[BlockSolution, ...]

    def jet(self, x) -> tuple[float, np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        n = len(self.variables)
        parts = []
        for blk in self.blocks:
            idx = [self.variables.index(v) for v in blk.variables]
            parts.append((idx,) + blk.jet(x[idx]))
        values = [p[1] for p in parts]

        def others(*skip):
            return math.prod(v for k, v in enumerate(values) if k not in skip)

        u = others()
        grad = np.zeros(n)
        hess = np.zeros((n, n))
        for k, (idx, v, g, h) in enumerate(parts):
            grad[idx] = g * others(k)
            hess[np.ix_(idx, idx)] = h * others(k)
            for m, (idx2, v2, g2, h2) in enumerate(parts):
                if m != k:
                    hess[np.ix_(idx, idx2)] = np.outer(g, g2) * others(k, m)
        return u, grad, hess

    def __call__(self, x) -> float:
        return self.jet(x)[0]


def product_assemble(blocks: Sequence[BlockSolution], variables: Sequence[str] | None = None) -> AssembledProduct:
    blocks = tuple(sorted(blocks, key=lambda b: b.beta))
    if variables is None:
        variables = [v for b in blocks for v in b.variables]
    covered = [v for b in blocks for v in b.variables]
    if sorted(covered) != sorted(variables):
        raise SpecError("blocks must cover every coordinate exactly once")
    return AssembledProduct(tuple(variables), blocks)


def helmholtz_residual(spec: PainleveSpec, u: AssembledProduct, a, points) -> float:
    """max |-Δ_g u - a_1 u| over ``points``."""
    a = SeparationConstants.of(a)
    lap = laplacian(spec)
    worst = 0.0
    for x in np.atleast_2d(points):
        v, g, h = u.jet(x)
        worst = max(worst, abs(-lap.apply_values(x, v, g, h) - a.a1 * v))
    return worst


def eigen_residual(spec: PainleveSpec, alpha: int, u: AssembledProduct, a, points) -> float:
    """max |-Δ_{K(α)} u - a_α u|; for α = 1 this is the Helmholtz residual."""
    a = SeparationConstants.of(a)
    op = symmetry_operator(spec, alpha)
    worst = 0.0
    for x in np.atleast_2d(points):
        v, g, h = u.jet(x)
        worst = max(worst, abs(-op.apply_values(x, v, g, h) - a.values[alpha - 1] * v))
    return worst


def _ratio_from_values(spec: PainleveSpec, blk: BlockSolution, x, v: float, g, h) -> float:
    op = b_operator(spec, blk.beta)
    idx = [spec.variables.index(w) for w in blk.variables]
    grad = np.zeros(spec.n)
    hess = np.zeros((spec.n, spec.n))
    grad[idx] = g
    hess[np.ix_(idx, idx)] = h
    return op.apply_values(x, v, grad, hess) / v


def block_equation_ratio(spec: PainleveSpec, blk: BlockSolution, x) -> float:
    """(B_β u_β)/u_β at ``x`` using the interpolated block solution."""
    x = np.asarray(x, dtype=float)
    idx = [spec.variables.index(v) for v in blk.variables]
    return _ratio_from_values(spec, blk, x, *blk.jet(x[idx]))


def block_equation_residual(spec: PainleveSpec, blk: BlockSolution, a, points=None) -> float:
    """max |B_β u_β / u_β - Σ_α s_{βα} a_α| over ``points``.

    With ``points=None`` the ratio is taken on the solver's own nodes:
    u and u' are the integrator's values and u'' is the derivative of a
    spline through u', which is independent of the ODE right-hand side.
    Other coordinates sit at the chart centre.
    """
    a = SeparationConstants.of(a)
    row = ex.compile_exprs(list(spec.stackel[blk.beta - 1]), spec.variables)
    worst = 0.0
    if points is None:
        if not blk.sampled:
            raise ValueError("node evaluation needs a sampled block solution")
        j = spec.variables.index(blk.variables[0])
        x = spec.chart.center()
        d2u = CubicSpline(blk.grid, blk.du, bc_type="not-a-knot")(blk.grid, 1)
        for t, v, g, h in zip(blk.grid, blk.u, blk.du, d2u):
            x[j] = t
            sigma = float(np.dot(row(list(x)), a.values))
            worst = max(worst, abs(_ratio_from_values(spec, blk, x, v, [g], [[h]]) - sigma))
        return worst
    for x in np.atleast_2d(points):
        sigma = float(np.dot(row(list(x)), a.values))
        worst = max(worst, abs(block_equation_ratio(spec, blk, x) - sigma))
    return worst


@dataclass(frozen=True)
class RankResult:
    matrix: np.ndarray
    det: float
    stackel: np.ndarray
    verdict: bool
    relative_gap: float


def rank_condition_helmholtz(spec: PainleveSpec, a, probe, da: float = 1e-4, nodes: int = 4001) -> RankResult:
    """M[β, α] = ∂_{a_α}(B_β u_β / u_β) at ``probe`` by central differences in a.

    The verdict requires |det M| > 1e-6 times the scale of M; the matrix
    is also compared with S at the probe.
    """
    a = SeparationConstants.of(a)
    probe = np.asarray(probe, dtype=float)
    r = spec.r
    M = np.zeros((r, r))
    for b in range(r):
        for al in range(r):
            ratio = [block_equation_ratio(spec, helmholtz_block_ode(spec, b + 1, a.shifted(al, s * da), nodes=nodes),
                                          probe) for s in (1, -1)]
            M[b, al] = (ratio[0] - ratio[1]) / (2 * da)
    S = np.array(ex.compile_exprs([e for row in spec.stackel for e in row], spec.variables)(list(probe))).reshape(r, r)
    det = float(np.linalg.det(M))
    scale = max(1.0, float(np.max(np.abs(M)))) ** r
    gap = float(np.max(np.abs(M - S)) / max(1.0, np.max(np.abs(S))))
    return RankResult(M, det, S, abs(det) > 1e-6 * scale, gap)
