"""Conformal rescalings that keep the Helmholtz equation separable.

The pipeline: the gauge factor R, the block potentials P_β, the equation
that the conformal factor c must satisfy, the transformation law of the
Laplacian under g -> c^4 g, and a finite-difference Newton solver for the
semilinear Dirichlet problem Δw + f w - λ w^p = 0 that produces c.

Sign convention for the conformal-factor equation (checked end to end
in the tests):

    Δ_g c^{n-2} - λ c^{n+2} + (a_1 + Σ_β (s^{β1}/det S)(P_β - φ_β)) c^{n-2} = 0.
"""

from __future__ import annotations

import csv
import weakref
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RectBivariateSpline

from . import expr as ex
from .errors import NumericalError, SpecError
from .expr import Expr
from .operators import gamma_upper_exprs, laplacian, block_laplacian_op
from .stackel import ConformalData, MetricField, PainleveSpec

_CACHE = weakref.WeakKeyDictionary()


def _memo(spec, key, build):
    table = _CACHE.setdefault(spec, {})
    if key not in table:
        table[key] = build()
    return table[key]


def _at(e: Expr, spec: PainleveSpec, x) -> float:
    return ex.compile_exprs([e], spec.variables)(list(spec.point(x)))[0]


# ---------------------------------------------------------------------------
# R and the elimination identity


def r_factor_expr(spec: PainleveSpec) -> Expr:
    """R = Π (s^{α1})^{l_α/4} / (det S)^{(n-2)/4}.

    Written as the fourth root of Π (s^{α1})^{l_α} / (det S)^{n-2}; every
    s^{α1} has the sign of det S, so the radicand is positive even when
    det S is negative.
    """
    def build():
        num = ex.ONE
        for a, size in enumerate(spec.chart.sizes):
            num = ex.mul(num, ex.power(spec.cofactors[a][0], ex.const(size)))
        ratio = ex.div(num, ex.power(spec.det_s, ex.const(spec.n - 2)))
        return ex.power(ratio, ex.const(0.25))
    return _memo(spec, "R", build)


def r_factor(spec: PainleveSpec, x) -> float:
    return _at(r_factor_expr(spec), spec, x)


def elimination_residual(spec: PainleveSpec, x) -> float:
    """max_j |2 (G^β)^{ij} ∂_i log R - γ^j|: R absorbs the first-order terms."""
    R = r_factor_expr(spec)
    up = gamma_upper_exprs(spec)
    exprs = []
    for b in range(spec.r):
        idx = spec.chart.block_indices(b)
        Ginv = spec.block_inverses[b]
        for q, j in enumerate(idx):
            lhs = ex.sum_exprs(ex.mul(Ginv[p][q], ex.div(ex.differentiate(R, spec.variables[i]), R))
                               for p, i in enumerate(idx))
            exprs.append(ex.sub(ex.mul(ex.const(2.0), lhs), up[j]))
    return float(np.max(np.abs(ex.compile_exprs(exprs, spec.variables)(list(spec.point(x))))))


# ---------------------------------------------------------------------------
# P_β


def p_beta_expr(spec: PainleveSpec, beta: int) -> Expr:
    """P_β = -½ ∂_j γ^j - ¼ γ^j ∂_j log|G_β| + ¼ (G_β)_{ij} γ^i γ^j over group β."""
    def build():
        b0 = beta - 1
        idx = spec.chart.block_indices(b0)
        G = spec.block_metrics[b0]
        detG = spec.block_dets[b0]
        up = gamma_upper_exprs(spec)
        terms = []
        for q, j in enumerate(idx):
            v = spec.variables[j]
            terms.append(ex.mul(ex.const(-0.5), ex.differentiate(up[j], v)))
            terms.append(ex.mul(ex.const(-0.25), ex.mul(up[j], ex.div(ex.differentiate(detG, v), detG))))
            for p, i in enumerate(idx):
                terms.append(ex.mul(ex.const(0.25), ex.mul(G[p][q], ex.mul(up[i], up[j]))))
        return ex.sum_exprs(terms)
    if not 1 <= beta <= spec.r:
        raise SpecError(f"block label {beta} outside 1..{spec.r}")
    return _memo(spec, ("P", beta), build)


def p_beta(spec: PainleveSpec, beta: int, x) -> float:
    return _at(p_beta_expr(spec, beta), spec, x)


def laplacian_r_over_r(spec: PainleveSpec, x) -> float:
    """Δ_g R / R by the generic Laplacian; equals -Σ (s^{β1}/det S) P_β."""
    R = r_factor_expr(spec)
    return _at(ex.div(laplacian(spec).apply(R), R), spec, x)


def weighted_p_sum(spec: PainleveSpec, x) -> float:
    """Σ_β (s^{β1}/det S) P_β."""
    return _at(ex.sum_exprs(ex.mul(spec.inverse_block_factors[b], p_beta_expr(spec, b + 1))
                            for b in range(spec.r)), spec, x)


# ---------------------------------------------------------------------------
# transformation law


def conformal_law_residual(spec: PainleveSpec | MetricField, c: Expr, u: Expr, x) -> float:
    """|Δ_{c^4 g} u - c^{-(n+2)} (Δ_g - q) (c^{n-2} u)| with q = c^{-(n-2)} Δ_g c^{n-2}.

    The left side is the generic Laplacian of the rescaled metric; the
    right side only uses Δ_g.
    """
    field_ = spec.metric_field if isinstance(spec, PainleveSpec) else spec
    n = field_.n
    c, u = ex.as_expr(c), ex.as_expr(u)
    lhs = laplacian(field_.scaled(ex.power(c, ex.const(4.0)))).apply(u)
    lap = laplacian(spec)
    cn = ex.power(c, ex.const(n - 2.0))
    # (Δ_g - q)(c^{n-2} u) = Δ_g(c^{n-2} u) - u Δ_g c^{n-2}
    rhs = ex.mul(ex.power(c, ex.const(-(n + 2.0))), ex.sub(lap.apply(ex.mul(cn, u)), ex.mul(u, lap.apply(cn))))
    a, b = ex.compile_exprs([lhs, rhs], field_.variables)(list(np.asarray(x, dtype=float)))
    return abs(a - b)


# ---------------------------------------------------------------------------
# the R-separability equations


def forcing_expr(spec: PainleveSpec, data: ConformalData) -> Expr:
    """a_1 + Σ_β (s^{β1}/det S)(P_β - φ_β): the coefficient f of the semilinear equation."""
    terms = [ex.const(data.a1)]
    for b in range(spec.r):
        terms.append(ex.mul(spec.inverse_block_factors[b], ex.sub(p_beta_expr(spec, b + 1), data.phi[b])))
    return ex.sum_exprs(terms)


def conformal_equation_expr(spec: PainleveSpec, data: ConformalData, sign: float = 1.0) -> Expr:
    """Δ_g c^{n-2} - λ c^{n+2} + sign · f · c^{n-2}.

    ``sign = +1`` is the convention under which u = c^{-(n-2)} R w solves
    the rescaled Helmholtz equation; ``sign = -1`` is kept so the opposite
    convention can be tested and seen to fail.
    """
    n = spec.n
    cn = ex.power(data.c, ex.const(n - 2.0))
    return ex.sum_exprs([
        laplacian(spec).apply(cn),
        ex.mul(ex.const(-data.lam), ex.power(data.c, ex.const(n + 2.0))),
        ex.mul(ex.const(sign), ex.mul(forcing_expr(spec, data), cn)),
    ])


def separated_operator_residual(spec: PainleveSpec, data: ConformalData, w: Expr, x) -> float:
    """|Σ (s^{β1}/det S)(-Δ_{G_β} + φ_β) w - a_1 w|."""
    terms = [ex.mul(ex.const(-data.a1), w)]
    for b in range(spec.r):
        lap = block_laplacian_op(spec, b + 1)
        inner = ex.sub(ex.mul(data.phi[b], w), lap.apply(w))
        terms.append(ex.mul(spec.inverse_block_factors[b], inner))
    return abs(_at(ex.sum_exprs(terms), spec, x))


@dataclass(frozen=True)
class RSepResiduals:
    eqnc_residual: float
    sepeqw_residual: float


def rsep_residuals(spec: PainleveSpec, data: ConformalData, w: Expr, x) -> RSepResiduals:
    return RSepResiduals(abs(_at(conformal_equation_expr(spec, data), spec, x)),
                         separated_operator_residual(spec, data, w, x))


# ---------------------------------------------------------------------------
# the grid solver


@dataclass(frozen=True, eq=False)
class GridProblem:
    """Dirichlet problem L w + f w - λ w^p = 0 on a rectangular grid.

    ``L = Σ a_ij ∂_i∂_j + Σ b_i ∂_i`` with coefficient arrays on the grid;
    by default the flat Laplacian.  ``eta`` holds Dirichlet values (only
    boundary entries are read).
    """

    axes: tuple[np.ndarray, ...]
    f: np.ndarray
    eta: np.ndarray
    exponent: float
    a: np.ndarray | None = None  # shape (d, d) + grid shape
    b: np.ndarray | None = None  # shape (d,) + grid shape
    names: tuple[str, ...] = ()

    def __post_init__(self):
        d = len(self.axes)
        if d not in (2, 3):
            raise SpecError("grids must be two- or three-dimensional")
        for ax in self.axes:
            if len(ax) < 9:
                raise SpecError("need at least 9 grid points per axis")
            h = np.diff(ax)
            if np.ptp(h) > 1e-9 * np.max(h):
                raise SpecError("grid axes must be uniform")
        if self.f.shape != self.shape or self.eta.shape != self.shape:
            raise SpecError("f and eta must live on the grid")
        if np.any(self.boundary_values() <= 0):
            raise SpecError("boundary data must be positive")

    @classmethod
    def box(cls, bounds: Sequence[tuple[float, float]], points: int, f, eta, exponent: float,
            a=None, b=None, names=()) -> "GridProblem":
        axes = tuple(np.linspace(lo, hi, points) for lo, hi in bounds)
        mesh = np.meshgrid(*axes, indexing="ij")
        as_grid = lambda v: np.broadcast_to(v(*mesh) if callable(v) else np.asarray(v, dtype=float),
                                            mesh[0].shape).astype(float)
        return cls(axes, as_grid(f), as_grid(eta), exponent, a, b, tuple(names))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(ax) for ax in self.axes)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(float(ax[1] - ax[0]) for ax in self.axes)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for k in range(len(self.axes)):
            idx = [slice(None)] * len(self.axes)
            idx[k] = 0
            mask[tuple(idx)] = True
            idx[k] = -1
            mask[tuple(idx)] = True
        return mask

    def boundary_values(self) -> np.ndarray:
        return self.eta[self.boundary_mask()]

    def brackets(self, lam: float) -> tuple[float, float]:
        """Constant lower and upper solutions ε ≤ C for λ > 0, f > 0."""
        q = 1.0 / (self.exponent - 1.0)
        eta = self.boundary_values()
        interior = self.f[~self.boundary_mask()]
        eps = min(float(eta.min()), (float(interior.min()) / lam) ** q)
        upper = max(float(eta.max()), (float(interior.max()) / lam) ** q)
        return eps, upper

    def operator(self) -> sp.csr_matrix:
        """Finite-difference L on all nodes (boundary rows are left empty)."""
        shape, d = self.shape, len(self.axes)
        N = int(np.prod(shape))
        h = self.spacing
        index = np.arange(N).reshape(shape)
        interior = ~self.boundary_mask()
        rows, cols, vals = [], [], []

        def add(coef, offsets):
            # coef: array on interior nodes; offsets: list of (shift vector, weight)
            centre = index[interior]
            for shift, weight in offsets:
                nb = np.roll(index, [-s for s in shift], axis=tuple(range(d)))[interior]
                rows.append(centre)
                cols.append(nb)
                vals.append(coef * weight)

        a = self.a if self.a is not None else np.stack([np.stack([np.full(shape, float(i == j)) for j in range(d)])
                                                         for i in range(d)])
        for i in range(d):
            e = [0] * d
            e[i] = 1
            minus = [-s for s in e]
            add(a[i, i][interior] / h[i] ** 2, [(e, 1.0), (minus, 1.0), ([0] * d, -2.0)])
            for j in range(i + 1, d):
                coef = a[i, j][interior]
                if not np.any(coef):
                    continue
                pp, pm, mp, mm = ([0] * d for _ in range(4))
                pp[i], pp[j] = 1, 1
                pm[i], pm[j] = 1, -1
                mp[i], mp[j] = -1, 1
                mm[i], mm[j] = -1, -1
                # 2 a_ij ∂_i∂_j with the four-point cross stencil
                add(2 * coef / (4 * h[i] * h[j]), [(pp, 1.0), (mm, 1.0), (pm, -1.0), (mp, -1.0)])
            if self.b is not None and np.any(self.b[i]):
                add(self.b[i][interior] / (2 * h[i]), [(e, 1.0), (minus, -1.0)])
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(N, N))

    def residual(self, w: np.ndarray, lam: float, L: sp.csr_matrix | None = None) -> np.ndarray:
        """Nodal residual of L w + f w - λ w^p at interior nodes (zero on the boundary)."""
        L = self.operator() if L is None else L
        flat = w.ravel()
        res = L @ flat + self.f.ravel() * flat - lam * np.abs(flat) ** self.exponent
        res[self.boundary_mask().ravel()] = 0.0
        return res.reshape(self.shape)


@dataclass(frozen=True, eq=False)
class GridSolution:
    problem: GridProblem
    w: np.ndarray
    iterations: int
    residual: float
    lower: float
    upper: float
    history: tuple[float, ...] = ()

    @property
    def within_brackets(self) -> bool:
        slack = 1e-12 * max(1.0, self.upper)
        return bool(self.w.min() >= self.lower - slack and self.w.max() <= self.upper + slack)

    def to_csv(self, path) -> None:
        names = self.problem.names or tuple(f"x{k + 1}" for k in range(len(self.problem.axes)))
        mesh = np.meshgrid(*self.problem.axes, indexing="ij")
        with open(Path(path), "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(list(names) + ["w"])
            for row in zip(*(m.ravel() for m in mesh), self.w.ravel()):
                out.writerow([repr(float(v)) for v in row])


def yamabe_grid_solve(prob: GridProblem, lam: float, tol: float = 1e-10, max_iter: int = 200,
                      check_brackets: bool = True) -> GridSolution:
    """Damped Newton for L w + f w - λ w^p = 0 with w = η on the boundary.

    Only the regime λ > 0, f > 0 is solved.  Newton starts from the
    constant upper solution; a step is halved until the max-norm residual
    decreases.
    """
    interior = ~prob.boundary_mask()
    if lam <= 0:
        raise SpecError("the solver handles λ > 0 only; use GridProblem.residual to check other cases")
    if np.any(prob.f[interior] <= 0):
        raise SpecError("the solver needs f > 0 at interior nodes")
    eps, upper = prob.brackets(lam)
    L = prob.operator()
    w = np.full(prob.shape, upper)
    w[~interior] = prob.eta[~interior]
    inner = interior.ravel()
    Li = L[inner][:, inner]
    res = prob.residual(w, lam, L)
    norm = float(np.max(np.abs(res)))
    history = [norm]
    it = 0
    while norm >= tol:
        if it >= max_iter:
            raise NumericalError(f"Newton did not converge in {max_iter} iterations (residual {norm:.3e})")
        it += 1
        wf = w.ravel()
        diag = prob.f.ravel()[inner] - lam * prob.exponent * np.abs(wf[inner]) ** (prob.exponent - 1)
        J = (Li + sp.diags(diag)).tocsc()
        step = spla.spsolve(J, -res.ravel()[inner])
        t = 1.0
        while True:
            trial = wf.copy()
            trial[inner] += t * step
            trial = trial.reshape(prob.shape)
            tres = prob.residual(trial, lam, L)
            tnorm = float(np.max(np.abs(tres)))
            if tnorm < norm or t < 1e-4:
                break
            t *= 0.5
        w, res, norm = trial, tres, tnorm
        history.append(norm)
    sol = GridSolution(prob, w, it, norm, eps, upper, tuple(history))
    if check_brackets and not sol.within_brackets:
        raise NumericalError(f"solution leaves the brackets [{eps}, {upper}]: range "
                             f"[{w.min()}, {w.max()}]")
    return sol


def richardson_differences(solutions: Sequence[GridSolution]) -> list[float]:
    """Max nodal change between successive grids, compared on the coarsest nodes.

    Each grid must refine the previous one by a factor 2 per axis.
    """
    coarse = solutions[0].problem.shape
    out = []
    sampled = []
    for sol in solutions:
        factors = [(m - 1) // (c - 1) for m, c in zip(sol.problem.shape, coarse)]
        sampled.append(sol.w[tuple(slice(None, None, f) for f in factors)])
    for a, b in zip(sampled, sampled[1:]):
        out.append(float(np.max(np.abs(a - b))))
    return out


# ---------------------------------------------------------------------------
# building a grid problem from a spec


def grid_problem_from_spec(spec: PainleveSpec, data: ConformalData, axes: Sequence[str], points: int,
                           eta, lam: float | None = None, bounds=None, sign: float = 1.0) -> GridProblem:
    """Discretize the conformal-factor equation for w = c^{n-2} on a sub-box.

    Coordinates outside ``axes`` are frozen at the box centre, which is
    exact when the coefficients and the solution do not depend on them.
    """
    n = spec.n
    if n < 3:
        raise SpecError("the conformal-factor equation needs n >= 3")
    pos = [spec.variables.index(v) for v in axes]
    bounds = bounds or [spec.chart.interval(v) for v in axes]
    grid_axes = tuple(np.linspace(lo, hi, points) for lo, hi in bounds)
    mesh = np.meshgrid(*grid_axes, indexing="ij")
    lap = laplacian(spec)
    d = len(axes)
    exprs = [lap.a[i][j] for i in pos for j in pos] + [lap.b[i] for i in pos] + [forcing_expr(spec, data)]
    prog = ex.compile_exprs(exprs, spec.variables)
    centre = spec.chart.center()
    vals = np.empty((len(exprs),) + mesh[0].shape)
    for idx in np.ndindex(mesh[0].shape):
        x = centre.copy()
        for k, p in enumerate(pos):
            x[p] = mesh[k][idx]
        vals[(slice(None),) + idx] = prog(list(x))
    a = vals[:d * d].reshape((d, d) + mesh[0].shape)
    b = vals[d * d:d * d + d]
    f = sign * vals[-1]
    eta_grid = np.broadcast_to(eta(*mesh) if callable(eta) else np.asarray(eta, dtype=float),
                               mesh[0].shape).astype(float)
    return GridProblem(grid_axes, f, eta_grid, (n + 2.0) / (n - 2.0), a, b, tuple(axes))


class GridFactor:
    """Conformal factor c = w^{1/(n-2)} interpolated from a 2D grid solution.

    With ``refined`` (the same problem on the grid with twice the
    resolution) the nodal values are Richardson-extrapolated,
    (4 w_fine - w_coarse) / 3, before a quintic spline is fitted; the
    rescaled Helmholtz residual needs second derivatives of c and plain
    O(h^2) nodal values are not accurate enough for them.  Coordinates not
    on the grid contribute zero derivatives.
    """

    def __init__(self, spec: PainleveSpec, sol: GridSolution, refined: GridSolution | None = None,
                 degree: int = 5):
        if len(sol.problem.axes) != 2:
            raise SpecError("interpolation is implemented for 2D grids")
        self.spec = spec
        self.pos = [spec.variables.index(v) for v in sol.problem.names]
        values = sol.w
        if refined is not None:
            if tuple(2 * (m - 1) + 1 for m in sol.problem.shape) != refined.problem.shape:
                raise SpecError("refined grid must halve the spacing")
            values = (4.0 * refined.w[::2, ::2] - sol.w) / 3.0
        ax = sol.problem.axes
        self.spline = RectBivariateSpline(ax[0], ax[1], values ** (1.0 / (spec.n - 2)), kx=degree, ky=degree)

    def jet(self, x) -> tuple[float, np.ndarray, np.ndarray]:
        n = self.spec.n
        s, (i, j) = self.spline, self.pos
        a, b = x[i], x[j]
        v = float(s(a, b, grid=False))
        g = np.zeros(n)
        h = np.zeros((n, n))
        g[i] = s(a, b, dx=1, grid=False)
        g[j] = s(a, b, dy=1, grid=False)
        h[i, i] = s(a, b, dx=2, grid=False)
        h[j, j] = s(a, b, dy=2, grid=False)
        h[i, j] = h[j, i] = s(a, b, dx=1, dy=1, grid=False)
        return v, g, h


def _expr_jet(e: Expr, spec: PainleveSpec, x):
    vs = spec.variables
    grad = [ex.differentiate(e, v) for v in vs]
    hess = [ex.differentiate(g, v) for g in grad for v in vs]
    vals = np.array(ex.compile_exprs([e] + grad + hess, vs)(list(x)))
    n = spec.n
    return vals[0], vals[1:1 + n], vals[1 + n:].reshape(n, n)


def rescaled_helmholtz_residual(spec: PainleveSpec, factor, w: Expr, lam: float, points) -> tuple[float, float]:
    """max |-Δ_{c^4 g} u - λ u| for u = c^{-(n-2)} R w, plus max |λ u| as a scale.

    ``factor`` supplies the jet of c (e.g. a :class:`GridFactor`).  Uses
    Δ_{c^4 g} u = c^{-4} Δ_g u + 2(n-2) c^{-5} g^{ij} ∂_i c ∂_j u.
    """
    n = spec.n
    lap = laplacian(spec)
    E = ex.mul(r_factor_expr(spec), w)
    ginv_prog = ex.compile_exprs([e for row in spec.inverse_metric for e in row], spec.variables)
    worst, scale = 0.0, 0.0
    for x in np.atleast_2d(points):
        c, cg, ch = factor.jet(x)
        e, eg, eh = _expr_jet(E, spec, x)
        k = -(n - 2.0)
        # jet of c^k
        p0 = c ** k
        p1 = k * c ** (k - 1) * cg
        p2 = k * c ** (k - 1) * ch + k * (k - 1) * c ** (k - 2) * np.outer(cg, cg)
        u0 = p0 * e
        u1 = p0 * eg + e * p1
        u2 = p0 * eh + e * p2 + np.outer(p1, eg) + np.outer(eg, p1)
        ginv = np.array(ginv_prog(list(x))).reshape(n, n)
        lap_u = c ** -4 * lap.apply_values(x, u0, u1, u2) + 2 * (n - 2) * c ** -5 * (cg @ ginv @ u1)
        worst = max(worst, abs(-lap_u - lam * u0))
        scale = max(scale, abs(lam * u0))
    return worst, scale
