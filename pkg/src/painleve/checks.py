"""Verification suites shared by the command line and the report.

Each suite takes a spec and :class:`Options` and returns a list of
:class:`Check` records.  Records hold plain Python values only, so a
report serializes to the same bytes on every run.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expr as ex
from .conformal import (GridFactor, conformal_equation_expr, conformal_law_residual, elimination_residual,
                        grid_problem_from_spec, laplacian_r_over_r, p_beta_expr, weighted_p_sum,
                        yamabe_grid_solve)
from .curvature import compare_offblock
from .dynamics import first_integral_drift, geodesic_integrate
from .errors import NumericalError
from .killing import (PhasePoint, identity_index_tuples, killing_eisenhart_residual, killing_equation_residual,
                      levi_civita_residual, poisson_bracket, second_order_residual)
from .operators import commutator_residual, laplacian, robertson_check, symmetry_operator
from .sampling import halton_points, interior_points, validation_points
from .separation import (eigen_residual, helmholtz_residual, helmholtz_separate, hj_block_quadrature,
                         hj_rank_matrix, hj_residual, product_assemble, rank_condition_helmholtz)
from .stackel import PainleveSpec, validate_spec
from .tolerances import VIOLATION_FLOOR, tolerance

PASS, FAIL, SKIP = "pass", "fail", "skip"


@dataclass(frozen=True)
class Options:
    samples: int = 64
    seed: int = 0
    tol_scale: float = 1.0
    solve: bool = False
    T: float = 10.0
    dt: float = 1e-3

    def tol(self, name: str) -> float:
        return tolerance(name, self.tol_scale)

    @property
    def heavy_samples(self) -> int:
        """Point count for checks that compose fourth-order operators or solve ODEs."""
        return max(1, min(self.samples, 16))


@dataclass
class Check:
    name: str
    verdict: str
    max_residual: float | None = None
    tolerance: float | None = None
    worst_point: list | None = None
    sample_count: int = 0
    notes: str = ""
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "max_residual": _clean(self.max_residual),
            "tolerance": _clean(self.tolerance),
            "worst_point": _clean(self.worst_point),
            "sample_count": int(self.sample_count),
            "notes": self.notes,
            "detail": _clean(self.detail),
        }


def _clean(v):
    """Plain JSON-safe values; non-finite floats become strings."""
    if v is None or isinstance(v, (str, bool)):
        return v
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_clean(x) for x in v]
    if isinstance(v, (int, np.integer)):
        return int(v)
    f = float(v)
    return f if np.isfinite(f) else repr(f)


def _measured(name: str, values: list[tuple[float, np.ndarray | None]], tol: float, notes: str = "",
              detail: dict | None = None) -> Check:
    """Turn (residual, point) samples into a pass/fail record (pass iff max < tol)."""
    if not values:
        return Check(name, SKIP, notes=notes or "nothing to check", detail=detail or {})
    worst, at = max(values, key=lambda t: t[0])
    point = None if at is None else [float(c) for c in at]
    return Check(name, PASS if worst < tol else FAIL, float(worst), tol, point, len(values), notes, detail or {})


def _skip(name: str, why: str) -> Check:
    return Check(name, SKIP, notes=why)


# ---------------------------------------------------------------------------
# suites


def suite_validate(spec: PainleveSpec, opt: Options) -> list[Check]:
    rep = validate_spec(spec, opt.samples, opt.seed)
    first = rep.violations[0] if rep.violations else None
    out = [Check("painleve_conditions", PASS if rep.valid else FAIL, float(len(rep.violations)), 0.0,
                 None if first is None or first.point is None else list(first.point), rep.points_checked,
                 "" if first is None else f"{first.kind}: {first.message}")]
    if not rep.valid:
        return out
    n = spec.n
    prog = ex.compile_exprs([e for row in spec.metric_field.lower for e in row]
                            + [e for row in spec.inverse_metric for e in row] + [spec.det_g], spec.variables)
    vals = []
    for x in validation_points(spec.chart, opt.samples, opt.seed):
        v = np.array(prog(list(x)))
        g, ginv, det = v[:n * n].reshape(n, n), v[n * n:2 * n * n].reshape(n, n), v[-1]
        direct = np.linalg.det(g)
        err = max(abs(det - direct) / max(1.0, abs(direct)), float(np.max(np.abs(g @ ginv - np.eye(n)))))
        vals.append((err, x))
    out.append(_measured("metric_assembly", vals, opt.tol("metric")))
    return out


def _robertson(spec: PainleveSpec, opt: Options):
    return robertson_check(spec, opt.tol("single_derivative"), opt.samples, opt.seed)


def suite_robertson(spec: PainleveSpec, opt: Options) -> list[Check]:
    rep = _robertson(spec, opt)
    w = rep.differential_worst
    diff = Check("robertson_differential", PASS if rep.differential_pass else FAIL, rep.differential_max,
                 rep.tolerance, None if w is None else list(w.worst_point), rep.sample_count,
                 "max |d_j gamma_i| over i, j in different groups",
                 {} if w is None else {"alpha": w.alpha, "beta": w.beta, "i": w.i, "j": w.j})
    pair = rep.algebraic_worst_pair
    alg = Check("robertson_algebraic", PASS if rep.algebraic_pass else FAIL, rep.algebraic_max, rep.tolerance,
                None if rep.algebraic_worst_point is None else list(rep.algebraic_worst_point), rep.sample_count,
                "max |d_j d_k log((det S)^(n-2) / prod (s^g1)^l_g)| across groups",
                {} if pair is None else {"j": pair[0], "k": pair[1]})
    agree = Check("robertson_agreement", PASS if rep.verdicts_agree else FAIL, sample_count=rep.sample_count,
                  notes="differential and algebraic verdicts coincide")
    return [diff, alg, agree]


def suite_ricci(spec: PainleveSpec, opt: Options) -> list[Check]:
    if spec.r < 2:
        return [_skip("ricci_closed_form", "single block"), _skip("ricci_offblock", "single block")]
    pts = halton_points(spec.chart, opt.heavy_samples, opt.seed)
    cmp = compare_offblock(spec, pts)
    tol = opt.tol("ricci")
    closed = Check("ricci_closed_form", PASS if cmp.max_relative_gap < tol else FAIL, cmp.max_relative_gap, tol,
                   list(cmp.worst_gap_point), cmp.sample_count, "generic vs Stäckel-data formula, relative gap")
    pair = cmp.worst_offblock_pair
    off = Check("ricci_offblock", PASS if cmp.max_offblock < tol else FAIL, cmp.max_offblock, tol,
                list(cmp.worst_offblock_point), cmp.sample_count, "largest off-block Ricci component",
                {} if pair is None else {"j": pair[0], "k": pair[1]})
    return [closed, off]


def suite_killing(spec: PainleveSpec, opt: Options) -> list[Check]:
    pts = halton_points(spec.chart, opt.samples, opt.seed)
    r = spec.r
    eq = [(killing_equation_residual(spec, a, x), x) for x in pts[:opt.heavy_samples] for a in range(1, r + 1)]
    momenta = 2.0 * halton_points(spec.chart, opt.samples, opt.seed + 1)  # box is not used as a box here
    momenta = np.array([m - spec.chart.center() * 2.0 for m in momenta])
    pb = []
    for x, p in zip(pts, momenta):
        pp = PhasePoint.make(x, p)
        scale = 1.0 + float(np.linalg.norm(p)) ** 4
        for a, b in itertools.combinations(range(1, r + 1), 2):
            pb.append((abs(poisson_bracket(spec, a, b, pp)) / scale, x))
        for a in range(2, r + 1):
            pb.append((abs(poisson_bracket(spec, 1, a, pp)) / scale, x))
    ke, lc = [], []
    for x in pts[:opt.heavy_samples]:
        for b, d, g in itertools.product(range(1, r + 1), repeat=3):
            for j in spec.chart.block_indices(g - 1):
                ke.append((killing_eisenhart_residual(spec, x, b, d, g, j), x))
        for a, b, j, k in identity_index_tuples(spec):
            for g in range(1, r + 1):
                lc.append((levi_civita_residual(spec, x, a, b, g, j, k), x))
            lc.append((second_order_residual(spec, x, a, b, j, k), x))
    return [
        _measured("killing_equation", eq, opt.tol("killing"), "symmetrized covariant derivative of each K"),
        _measured("poisson_brackets", pb, opt.tol("poisson"), "|{K_a, K_b}| / (1 + |p|^4)"),
        _measured("killing_eisenhart", ke, opt.tol("eisenhart")),
        _measured("levi_civita", lc, opt.tol("levi_civita"), "first- and second-order forms"),
    ]


def suite_commute(spec: PainleveSpec, opt: Options, robertson: bool | None = None) -> list[Check]:
    if robertson is None:
        robertson = _robertson(spec, opt).passed
    if not robertson:
        return [_skip("commutators", "Robertson conditions fail; operators need not commute")]
    if spec.r < 2:
        return [_skip("commutators", "single block")]
    pts = interior_points(spec.chart, opt.heavy_samples, opt.seed)
    ops = [laplacian(spec)] + [symmetry_operator(spec, a) for a in range(2, spec.r + 1)]
    vals = []
    paths = set()
    for A, B in itertools.combinations(ops, 2):
        for u in spec.tests:
            for x in pts:
                res = commutator_residual(A, B, u, x)
                paths.add(res.path)
                vals.append((res.residual / res.scale, x))
    return [_measured("commutators", vals, opt.tol("commutator"), "relative to 1 + max(|ABu|, |BAu|)",
                      {"paths": sorted(paths), "functions": len(spec.tests)})]


def default_separation_constants(spec: PainleveSpec) -> np.ndarray:
    """a with S(centre) a = (1/2, ..., 1/2): every separated equation sees a mild constant."""
    S = np.array(ex.compile_exprs([e for row in spec.stackel for e in row], spec.variables)(
        list(spec.chart.center()))).reshape(spec.r, spec.r)
    return np.linalg.solve(S, np.full(spec.r, 0.5))


def suite_separate(spec: PainleveSpec, opt: Options, robertson: bool | None = None) -> list[Check]:
    names = ["helmholtz_product", "symmetry_eigen", "helmholtz_rank", "hamilton_jacobi", "hj_rank"]
    if any(size != 1 for size in spec.chart.sizes):
        return [_skip(k, "ODE separation needs one coordinate per group") for k in names]
    if robertson is None:
        robertson = _robertson(spec, opt).passed
    a = default_separation_constants(spec)
    pts = interior_points(spec.chart, opt.heavy_samples, opt.seed)
    probe = spec.chart.center() + 0.1 * (spec.chart.bounds()[1] - spec.chart.center())
    detail = {"a": [float(v) for v in a]}
    out = []
    if robertson:
        u = product_assemble(helmholtz_separate(spec, a), spec.variables)
        scale = max(1.0, max(abs(u(x)) for x in pts))
        out.append(_measured("helmholtz_product", [(helmholtz_residual(spec, u, a, [x]) / scale, x) for x in pts],
                             opt.tol("separation"), "-Δu = a_1 u, relative to max |u|", detail))
        eig = [(eigen_residual(spec, al, u, a, [x]) / scale, x) for x in pts for al in range(2, spec.r + 1)]
        out.append(_measured("symmetry_eigen", eig, opt.tol("separation"), "-Δ_K u = a_α u", detail))
        rank = rank_condition_helmholtz(spec, a, probe)
        out.append(Check("helmholtz_rank", PASS if rank.verdict and rank.relative_gap < opt.tol("rank") else FAIL,
                         rank.relative_gap, opt.tol("rank"), list(probe), 1,
                         "finite-difference Jacobian in a vs S", {"det": rank.det}))
    else:
        out += [_skip(k, "Robertson conditions fail; the Helmholtz equation does not separate") for k in names[:3]]
    # Hamilton-Jacobi separation does not need the Robertson conditions
    try:
        blocks = [hj_block_quadrature(spec, al, a) for al in range(1, spec.r + 1)]
    except NumericalError as err:
        out += [_skip("hamilton_jacobi", f"constants not admissible: {err}"), _skip("hj_rank", "see hamilton_jacobi")]
        return out
    out.append(_measured("hamilton_jacobi", [(hj_residual(spec, blocks, a, [x]), x) for x in pts],
                         opt.tol("hamilton_jacobi"), "g(dW, dW) = a_1", detail))
    S = np.array(ex.compile_exprs([e for row in spec.stackel for e in row], spec.variables)(list(probe))
                 ).reshape(spec.r, spec.r)
    M = hj_rank_matrix(spec, a, probe)
    gap = float(np.max(np.abs(M - S)) / max(1.0, np.max(np.abs(S))))
    out.append(Check("hj_rank", PASS if gap < opt.tol("rank") else FAIL, gap, opt.tol("rank"), list(probe), 1,
                     "Jacobian of momenta in a vs S"))
    return out


def suite_conformal(spec: PainleveSpec, opt: Options, robertson: bool | None = None) -> list[Check]:
    pts = halton_points(spec.chart, opt.samples, opt.seed)
    heavy = pts[:opt.heavy_samples]
    out = [_measured("r_elimination", [(elimination_residual(spec, x), x) for x in pts], opt.tol("elimination"),
                     "2 G^ij d_i log R = gamma^j")]
    out.append(_measured("r_laplacian", [(abs(laplacian_r_over_r(spec, x) + weighted_p_sum(spec, x)), x)
                                         for x in heavy], opt.tol("laplacian"),
                         "Δ_g R / R = -Σ (s^b1 / det S) P_b"))
    c = ex.parse(f"1 + 0.1*{spec.variables[0]}^2")
    law = [(conformal_law_residual(spec, c, u, x), x) for x in heavy[:4] for u in spec.tests[:2]]
    out.append(_measured("conformal_law", law, opt.tol("conformal_law"), "c = 1 + 0.1 x1^2"))
    if robertson is None:
        robertson = _robertson(spec, opt).passed
    if robertson:
        loc = []
        for b in range(spec.r):
            P = p_beta_expr(spec, b + 1)
            others = [v for v in spec.variables if spec.chart.group_of[v] != b]
            if not others:
                continue
            prog = ex.compile_exprs([ex.differentiate(P, v) for v in others], spec.variables)
            loc += [(float(np.max(np.abs(prog(list(x))))), x) for x in heavy]
        out.append(_measured("p_locality", loc, opt.tol("single_derivative"), "P_b depends on group b only"))
    else:
        out.append(_skip("p_locality", "Robertson conditions fail"))
    if spec.conformal is None:
        out.append(_skip("conformal_equation", "spec has no conformal data"))
        return out
    eq = conformal_equation_expr(spec, spec.conformal)
    prog = ex.compile_exprs([eq], spec.variables)
    out.append(_measured("conformal_equation", [(abs(prog(list(x))[0]), x) for x in heavy],
                         opt.tol("laplacian"), "equation for the conformal factor"))
    if opt.solve:
        out.append(_grid_check(spec, opt))
    return out


def _grid_check(spec: PainleveSpec, opt: Options) -> Check:
    if spec.n < 3:
        return _skip("yamabe_solve", "needs n >= 3")
    data = spec.conformal
    if data.lam <= 0:
        return _skip("yamabe_solve", "solver covers λ > 0 only")
    prob = grid_problem_from_spec(spec, data, spec.variables[:2], 33, 1.0)
    if np.any(prob.f[1:-1, 1:-1] <= 0):
        return _skip("yamabe_solve", "forcing is not positive on the grid")
    sol = yamabe_grid_solve(prob, data.lam, opt.tol("newton"))
    return Check("yamabe_solve", PASS if sol.within_brackets else FAIL, sol.residual, opt.tol("newton"), None,
                 int(np.prod(prob.shape)), "33x33 grid on the first two coordinates, eta = 1",
                 {"iterations": sol.iterations, "lower": sol.lower, "upper": sol.upper,
                  "min": float(sol.w.min()), "max": float(sol.w.max())})


def geodesic_start(spec: PainleveSpec, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Start at the centre with a momentum small enough to stay well inside the box for time T."""
    x0 = spec.chart.center()
    d = np.linspace(1.0, -1.0, spec.n) + 0.3
    with np.errstate(all="ignore"):
        ginv = np.array(ex.compile_exprs([e for row in spec.inverse_metric for e in row], spec.variables)(
            list(x0))).reshape(spec.n, spec.n)
    if not np.all(np.isfinite(ginv)):
        raise NumericalError("inverse metric is not finite at the chart centre", point=x0)
    lo, hi = spec.chart.bounds()
    speed = 2.0 * float(np.linalg.norm(ginv @ d))
    if speed == 0.0:
        raise NumericalError("inverse metric is degenerate at the chart centre", point=x0)
    kappa = 0.2 * float(np.min(hi - lo)) / (T * speed)
    return x0, kappa * d


def suite_geodesic(spec: PainleveSpec, opt: Options) -> list[Check]:
    x0, p0 = geodesic_start(spec, opt.T)
    traj = geodesic_integrate(spec, x0, p0, opt.T, opt.dt)
    notes = f"T = {opt.T}, dt = {opt.dt}" + (", left the domain early" if traj.exited else "")
    out = []
    for a in range(1, spec.r + 1):
        name = "drift_H" if a == 1 else f"drift_K{a}"
        out.append(Check(name, PASS if first_integral_drift(traj, a) < opt.tol("drift") else FAIL,
                         first_integral_drift(traj, a), opt.tol("drift"), list(x0), len(traj.t), notes))
    return out


SUITES: dict[str, Callable] = {
    "validate": suite_validate,
    "robertson": suite_robertson,
    "ricci": suite_ricci,
    "killing": suite_killing,
    "commute": suite_commute,
    "separate": suite_separate,
    "conformal": suite_conformal,
    "geodesic": suite_geodesic,
}

NEEDS_ROBERTSON = ("commute", "separate", "conformal")


def run_suites(spec: PainleveSpec, names, opt: Options) -> list[Check]:
    """Run the named suites in order; Robertson is evaluated once and shared."""
    checks = []
    robertson = None
    for name in names:
        if name in NEEDS_ROBERTSON:
            if robertson is None:
                robertson = _robertson(spec, opt).passed
            checks += SUITES[name](spec, opt, robertson)
        else:
            checks += SUITES[name](spec, opt)
        if name == "validate" and checks and checks[0].verdict == FAIL:
            break
    return checks
