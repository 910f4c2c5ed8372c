import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from painleve import catalogue, expr as ex
from painleve.conformal import (GridFactor, GridProblem, conformal_equation_expr, conformal_law_residual,
                                elimination_residual, forcing_expr, grid_problem_from_spec, laplacian_r_over_r,
                                p_beta, p_beta_expr, r_factor, rescaled_helmholtz_residual, richardson_differences,
                                rsep_residuals, weighted_p_sum, yamabe_grid_solve)
from painleve.errors import NumericalError, SpecError
from painleve.operators import gamma_upper
from painleve.sampling import halton_points, interior_points
from painleve.stackel import ConformalData, stackel_eval
from conftest import ALL, ROBERTSON, spec_named

P3 = 5.0  # (n + 2)/(n - 2) for n = 3


# ---------------------------------------------------------------------------
# R and P


def test_constant_stackel_r_is_constant():
    s = spec_named("euclidean3")
    vals = {r_factor(s, x) for x in halton_points(s.chart, 8, 0)}
    assert len(vals) == 1
    assert all(gamma_upper(s, s.chart.center(), j) == 0.0 for j in range(3))
    assert elimination_residual(s, s.chart.center()) == 0.0


def test_two_dimensional_r_ignores_det():
    s = spec_named("liouville2d")
    for x in halton_points(s.chart, 8, 0):
        c = stackel_eval(s, x).cofactors[:, 0]
        assert r_factor(s, x) == pytest.approx((c[0] * c[1]) ** 0.25, rel=1e-14)


@pytest.mark.parametrize("name", ALL)
def test_elimination_identity(name):
    s = spec_named(name)
    assert max(elimination_residual(s, x) for x in halton_points(s.chart, 16, 0)) < 1e-10


@pytest.mark.parametrize("name", ALL)
def test_laplacian_of_r(name):
    # independent assembly: Δ_g R / R from the generic Laplacian
    s = spec_named(name)
    for x in halton_points(s.chart, 8, 0):
        assert abs(laplacian_r_over_r(s, x) + weighted_p_sum(s, x)) < 1e-9


def test_flat_p_vanishes():
    s = spec_named("euclidean3")
    assert p_beta(s, 1, s.chart.center()) == 0.0 and p_beta(s, 2, s.chart.center()) == 0.0


@pytest.mark.parametrize("name", ROBERTSON)
def test_p_depends_on_own_group(name):
    s = spec_named(name)
    for b in range(1, s.r + 1):
        P = p_beta_expr(s, b)
        others = [v for v in s.variables if s.chart.group_of[v] != b - 1]
        prog = ex.compile_exprs([ex.differentiate(P, v) for v in others], s.variables)
        for x in halton_points(s.chart, 16, 0):
            assert np.max(np.abs(prog(list(x)))) < 1e-10


def test_p_label_checked():
    with pytest.raises(SpecError):
        p_beta_expr(spec_named("warped3"), 3)


# ---------------------------------------------------------------------------
# transformation law


def test_unit_factor_law_is_exact():
    s = spec_named("warped3")
    assert conformal_law_residual(s, ex.ONE, s.tests[2], [0.1, 0.2, 0.3]) < 1e-14


def test_flat_2d_law():
    s = catalogue.euclidean(2, (1, 1))
    c = ex.parse("exp(x1/4)")
    for x in np.random.default_rng(0).uniform(-0.5, 0.5, (10, 2)):
        assert conformal_law_residual(s, c, ex.parse("x1*x2"), x) < 1e-9


@pytest.mark.parametrize("name", ALL)
@pytest.mark.parametrize("c", ["1 + 0.1*x1^2", "exp(0.2*x1 - 0.1*x2)", "2 + sin(x1 + x2)"])
def test_law_on_catalogue(name, c):
    s = spec_named(name)
    ce = ex.parse(c)
    for x in halton_points(s.chart, 4, 0):
        for u in s.tests[:2]:
            assert conformal_law_residual(s, ce, u, x) < 1e-8


def test_law_detects_wrong_exponent():
    # the rescaled Laplacian really differs from Δ_g
    s = spec_named("warped3")
    from painleve.operators import laplacian
    c = ex.parse("1 + 0.1*x1^2")
    x = [0.3, 0.1, 0.2]
    u = s.tests[0]
    lhs = laplacian(s.metric_field.scaled(ex.power(c, ex.const(4.0)))).at(u, x)
    assert abs(lhs - laplacian(s).at(u, x)) > 1e-3


# ---------------------------------------------------------------------------
# R-separability equations


def test_flat_trivial_data():
    s = spec_named("euclidean3")
    data = ConformalData(ex.ONE, 0.0, 0.0, (ex.ZERO, ex.ZERO))
    res = rsep_residuals(s, data, ex.ONE, [0.1, 0.2, 0.3])
    assert res.eqnc_residual == 0.0 and res.sepeqw_residual == 0.0


def test_flat_negative_lambda():
    s = spec_named("euclidean3")
    # c = 1, λ = -1: the equation reads 1 + a1 + Σ (s^b1/det S)(P_b - φ_b) = 0
    data = ConformalData(ex.ONE, -1.0, -1.0, (ex.ZERO, ex.ZERO))
    for x in halton_points(s.chart, 8, 0):
        assert rsep_residuals(s, data, ex.ONE, x).eqnc_residual < 1e-12
    wrong = ConformalData(ex.ONE, -1.0, -0.5, (ex.ZERO, ex.ZERO))
    assert rsep_residuals(s, wrong, ex.ONE, [0, 0, 0]).eqnc_residual > 0.1


def _warped_setup(a1=0.7, a2=0.4, k=1.0):
    s = catalogue.warped([["1"]], [["1", "0"], ["0", "1"]], f1="1 + x1^2")
    data = ConformalData(ex.ONE, 1.0, a1, (ex.parse(f"{a1} - {a2}/(1 + x1^2)"), ex.const(a2 - k * k)))
    return s, data


def test_separated_equation_for_warped_cosine():
    s, data = _warped_setup()
    for x in interior_points(s.chart, 8, 0):
        assert rsep_residuals(s, data, ex.parse("cos(x2)"), x).sepeqw_residual < 1e-12
        assert rsep_residuals(s, data, ex.parse("cos(2*x2)"), x).sepeqw_residual > 1e-3


def test_forcing_positive_for_solver_case():
    s, data = _warped_setup()
    prob = grid_problem_from_spec(s, data, ("x1", "x2"), 17, 1.0)
    assert prob.f.min() > 0
    with pytest.raises(SpecError):
        grid_problem_from_spec(spec_named("liouville2d"), data, ("x1", "x2"), 17, 1.0)


@pytest.fixture(scope="module")
def warped_grid_pair():
    s, data = _warped_setup()
    sols = [yamabe_grid_solve(grid_problem_from_spec(s, data, ("x1", "x2"), N, 1.0), 1.0) for N in (65, 129)]
    return s, data, sols


def test_end_to_end_rescaled_helmholtz(warped_grid_pair):
    s, data, (coarse, fine) = warped_grid_pair
    factor = GridFactor(s, coarse, fine)
    worst, scale = rescaled_helmholtz_residual(s, factor, ex.parse("cos(x2)"), 1.0, interior_points(s.chart, 16, 0))
    assert scale > 0.1
    assert worst < 2e-4


def test_end_to_end_opposite_sign_fails():
    # same pipeline with the opposite sign in front of the forcing; w is
    # chosen so that this sign still has positive forcing and can be solved
    s = catalogue.warped([["1"]], [["1", "0"], ["0", "1"]], f1="1 + x1^2")
    a1, a2 = 0.7, 0.4
    data = ConformalData(ex.ONE, 1.0, a1, (ex.parse(f"{a1} - {a2}/(1 + x1^2)"), ex.const(a2 + 4.0)))
    w = ex.parse("cosh(2*x2)")
    for x in interior_points(s.chart, 4, 0):
        assert rsep_residuals(s, data, w, x).sepeqw_residual < 1e-12
    sols = [yamabe_grid_solve(grid_problem_from_spec(s, data, ("x1", "x2"), N, 1.0, sign=-1.0), 1.0)
            for N in (33, 65)]
    worst, _ = rescaled_helmholtz_residual(s, GridFactor(s, *sols), w, 1.0, interior_points(s.chart, 8, 0))
    assert worst > 1e-2


def test_grid_factor_requires_refinement_by_two(warped_grid_pair):
    s, _, (coarse, fine) = warped_grid_pair
    with pytest.raises(SpecError):
        GridFactor(s, fine, coarse)


# ---------------------------------------------------------------------------
# grid solver


def test_grid_problem_validation():
    with pytest.raises(SpecError):
        GridProblem.box([(0, 1), (0, 1)], 5, 1.0, 1.0, P3)
    with pytest.raises(SpecError):
        GridProblem.box([(0, 1)], 17, 1.0, 1.0, P3)
    with pytest.raises(SpecError):
        GridProblem.box([(0, 1), (0, 1)], 17, 1.0, 0.0, P3)
    with pytest.raises(SpecError):
        GridProblem((np.array([0, .1, .2, .3, .4, .5, .6, .7, 1.0]),) * 2, np.ones((9, 9)), np.ones((9, 9)), P3)


def test_exact_constant_solution():
    prob = GridProblem.box([(0, 1), (0, 1)], 17, 2.0, 1.0, P3)
    sol = yamabe_grid_solve(prob, 2.0)
    assert sol.iterations == 0 and np.all(sol.w == 1.0)


def test_solver_regime_enforced():
    prob = GridProblem.box([(0, 1), (0, 1)], 17, 2.0, 1.0, P3)
    with pytest.raises(SpecError):
        yamabe_grid_solve(prob, 0.0)
    with pytest.raises(SpecError):
        yamabe_grid_solve(GridProblem.box([(0, 1), (0, 1)], 17, -1.0, 1.0, P3), 1.0)


def test_non_convergence_reported():
    prob = GridProblem.box([(0, 1), (0, 1)], 33, 2.0, 1.0, P3)
    with pytest.raises(NumericalError, match="did not converge"):
        yamabe_grid_solve(prob, 1.0, max_iter=1)


def test_solver_brackets_and_positivity():
    prob = GridProblem.box([(0, 1), (0, 1)], 33, 2.0, 1.0, P3)
    sol = yamabe_grid_solve(prob, 1.0)
    assert sol.iterations <= 200 and sol.residual < 1e-10
    assert sol.lower == 1.0 and sol.upper == pytest.approx(2.0 ** 0.25)
    assert sol.within_brackets and sol.w.min() > 0
    assert np.max(np.abs(prob.residual(sol.w, 1.0))) < 1e-10
    assert list(sol.history) == sorted(sol.history, reverse=True)


def test_richardson_second_order():
    sols = [yamabe_grid_solve(GridProblem.box([(0, 1), (0, 1)], N, 2.0, 1.0, P3), 1.0) for N in (17, 33, 65)]
    d1, d2 = richardson_differences(sols)
    assert 3.5 < d1 / d2 < 4.5


def test_monotone_in_boundary_data():
    lo = yamabe_grid_solve(GridProblem.box([(0, 1), (0, 1)], 33, 2.0, 1.0, P3), 1.0)
    hi = yamabe_grid_solve(GridProblem.box([(0, 1), (0, 1)], 33, 2.0, lambda x, y: 1.5 + 0 * x, P3), 1.0)
    assert np.all(hi.w >= lo.w - 1e-12) and np.any(hi.w > lo.w)


def test_three_dimensional_grid():
    sol = yamabe_grid_solve(GridProblem.box([(0, 1)] * 3, 9, lambda x, y, z: 1.5 + x * y, 1.0, P3), 1.0)
    assert sol.within_brackets and sol.residual < 1e-10


def test_variable_coefficients_against_manufactured_solution():
    # L = (1 + x^2) ∂xx + ∂yy + x ∂x; pick w and define f so w solves the equation
    N = 33
    ax = np.linspace(0, 1, N)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    w = 1 + 0.3 * np.sin(np.pi * X) * np.sin(np.pi * Y)
    wxx = -0.3 * np.pi ** 2 * np.sin(np.pi * X) * np.sin(np.pi * Y)
    wyy = wxx
    wx = 0.3 * np.pi * np.cos(np.pi * X) * np.sin(np.pi * Y)
    a = np.zeros((2, 2, N, N))
    a[0, 0], a[1, 1] = 1 + X ** 2, 1.0
    b = np.zeros((2, N, N))
    b[0] = X
    Lw = (1 + X ** 2) * wxx + wyy + X * wx
    f = (w ** P3 - Lw) / w
    sol = yamabe_grid_solve(GridProblem((ax, ax), f, np.ones_like(w), P3, a, b), 1.0)
    assert np.max(np.abs(sol.w - w)) < 5e-3


def test_grid_csv(tmp_path):
    sol = yamabe_grid_solve(GridProblem.box([(0, 1), (0, 1)], 9, 2.0, 1.0, P3, names=("u", "v")), 1.0)
    sol.to_csv(tmp_path / "w.csv")
    rows = list(csv.reader(open(tmp_path / "w.csv")))
    assert rows[0] == ["u", "v", "w"] and len(rows) == 82


@given(st.floats(0.5, 3.0), st.floats(0.5, 2.0), st.floats(0.5, 2.0))
def test_solution_always_bracketed(f0, lam, eta):
    prob = GridProblem.box([(0, 1), (0, 1)], 9, lambda x, y: f0 * (1 + 0.5 * x * y), eta, P3)
    sol = yamabe_grid_solve(prob, lam)
    assert sol.within_brackets and sol.w.min() > 0
