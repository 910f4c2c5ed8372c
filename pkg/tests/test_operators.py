import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from painleve import catalogue, expr as ex
from painleve.curvature import compare_offblock
from painleve.errors import SpecError
from painleve.operators import (DifferentialOperator, b_operator, b_operator_locality, big_gamma_cross_max,
                                commutator_residual, gamma_lower, gamma_upper, laplacian, laplacian_block,
                                mixed_log_hessian, operator_gap, robertson_check, robertson_points,
                                symmetry_operator, t_operator)
from painleve.sampling import halton_points, interior_points
from painleve.stackel import stackel_eval
from conftest import ALL, NOT_ROBERTSON, ROBERTSON, spec_named

TRIG = ex.parse("sin(x1 + 0.5*x2)")


# ---------------------------------------------------------------------------
# the operator type


def test_operator_shape_and_symmetry_checks():
    z, one = ex.ZERO, ex.ONE
    with pytest.raises(SpecError):
        DifferentialOperator(("x",), ((one,),), (z, z))
    with pytest.raises(SpecError):
        DifferentialOperator(("x", "y"), ((one, ex.var("x")), (z, one)), (z, z))


@pytest.mark.parametrize("name", ALL)
def test_operators_on_constants(name):
    s = spec_named(name)
    x = s.chart.center()
    for op in [laplacian(s), laplacian_block(s), symmetry_operator(s, s.r), t_operator(s, s.r),
               b_operator(s, 1)]:
        assert op.at(ex.const(3.0), x) == 0.0


@given(st.sampled_from(ALL), st.floats(-3, 3), st.integers(0, 7))
def test_linearity(name, a, k):
    s = spec_named(name)
    u, v = s.tests[k], s.tests[(k + 3) % len(s.tests)]
    x = s.chart.center()
    for op in (laplacian(s), symmetry_operator(s, s.r)):
        lhs = op.at(ex.add(ex.mul(ex.const(a), u), v), x)
        rhs = a * op.at(u, x) + op.at(v, x)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), abs(a * op.at(u, x)))


def test_apply_values_matches_symbolic():
    s = spec_named("warped3")
    L = laplacian(s)
    u = s.tests[5]
    x = np.array([0.1, 0.2, -0.3])
    jet = ex.jet_of(u, dict(zip(s.variables, x)), 2)
    grad = np.array([jet[v] for v in s.variables])
    hess = np.array([[jet[(a, b)] for b in s.variables] for a in s.variables])
    assert L.apply_values(x, jet.value, grad, hess) == pytest.approx(L.at(u, x), rel=1e-12)


# ---------------------------------------------------------------------------
# Laplacian


def test_flat_laplacian():
    s = spec_named("euclidean3")
    L = laplacian(s)
    for x in halton_points(s.chart, 5, 0):
        assert L.at(ex.parse("x1^2"), x) == 2.0


def test_liouville_laplacian():
    s = spec_named("liouville2d")
    x = (0.3, 0.7)
    assert abs(laplacian(s).at(ex.parse("x1*x2"), x)) < 1e-15
    u = ex.parse("x1^3*x2 + exp(x2)")
    expected = (6 * 0.3 * 0.7 + np.exp(0.7)) / (0.3 ** 2 + 0.7 ** 2 + 1)
    assert laplacian(s).at(u, x) == pytest.approx(expected, rel=1e-13)


def _fd_laplacian(spec, u, x, h=1e-4):
    """(1/√g) ∂_i(√g g^{ij} ∂_j u) by nested central differences."""
    from painleve.stackel import metric_at
    f = ex.compile_exprs([u], spec.variables)
    n = spec.n

    def flux(y):
        jet = metric_at(spec, y)
        grad = np.zeros(n)
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            grad[j] = (f(list(y + e))[0] - f(list(y - e))[0]) / (2 * h)
        return jet.sqrt_det * jet.g_inv @ grad

    total = 0.0
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        total += (flux(x + e)[i] - flux(x - e)[i]) / (2 * h)
    return total / metric_at(spec, x).sqrt_det


@pytest.mark.parametrize("name", ["warped3", "di_pirro", "robertson_violator", "vandermonde3"])
def test_laplacian_against_fd(name):
    s = spec_named(name)
    x = s.chart.center() + 0.1
    for u in s.tests[:3]:
        exact = laplacian(s).at(u, x)
        assert abs(exact - _fd_laplacian(s, u, x)) < 1e-5 * max(1, abs(exact))


@pytest.mark.parametrize("name", ALL)
def test_block_form_equals_generic(name):
    s = spec_named(name)
    for x in halton_points(s.chart, 32, 0):
        for u in s.tests:
            assert operator_gap(laplacian(s), laplacian_block(s), u, x) < 1e-9


@pytest.mark.parametrize("name", ROBERTSON)
def test_block_form_rearranges_into_b_operators(name):
    s = spec_named(name)
    for x in halton_points(s.chart, 16, 1):
        for u in s.tests:
            assert operator_gap(laplacian(s).scaled(ex.const(-1.0)), t_operator(s, 1), u, x) < 1e-9


# ---------------------------------------------------------------------------
# γ coefficients and Robertson


def test_gamma_vanishes_for_constant_stackel():
    s = spec_named("euclidean3")
    assert all(gamma_lower(s, s.chart.center(), i) == 0.0 for i in range(3))


def test_liouville_gamma_against_fd():
    s = spec_named("liouville2d")
    x = np.array([0.2, -0.3])
    h = 1e-6

    def log_term(y, i):
        v = stackel_eval(s, y)
        c = v.cofactors[:, 0]
        return np.log(abs(c[i]) / np.sqrt(abs(c[0] * c[1])))

    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = -(log_term(x + e, i) - log_term(x - e, i)) / (2 * h)
        assert abs(gamma_lower(s, x, i) - fd) < 1e-8
        assert gamma_upper(s, x, i) == pytest.approx(gamma_lower(s, x, i), rel=1e-14)


@pytest.mark.parametrize("name", ALL)
def test_robertson_verdicts_agree_with_catalogue(name):
    rep = robertson_check(spec_named(name))
    assert rep.sample_count >= 64
    assert rep.verdicts_agree
    assert rep.passed == catalogue.CATALOGUE[name].robertson


@pytest.mark.parametrize("name", ["warped3", "warped3_second", "multiply_warped3"])
def test_warped_robertson_tight(name):
    rep = robertson_check(spec_named(name))
    assert rep.differential_max < 1e-10 and rep.algebraic_max < 1e-10


def test_violator_fails_both_formulations():
    rep = robertson_check(spec_named("robertson_violator"))
    assert not rep.differential_pass and not rep.algebraic_pass
    assert rep.differential_max > 1e-2
    w = rep.differential_worst
    assert w.alpha != w.beta and w.worst_point is not None


@pytest.mark.parametrize("name", ALL)
def test_robertson_iff_offblock_ricci(name):
    s = spec_named(name)
    rob = robertson_check(s).passed
    ricci = compare_offblock(s, halton_points(s.chart, 16, 0)).max_offblock < 1e-8
    assert rob == ricci


@pytest.mark.parametrize("name", ALL)
def test_big_gamma_formulation_agrees(name):
    s = spec_named(name)
    pts = robertson_points(s, 16, 0)
    assert (big_gamma_cross_max(s, pts) < 1e-10) == robertson_check(s, samples=16).differential_pass


def test_mixed_log_hessian_symmetric():
    s = spec_named("robertson_violator")
    H = mixed_log_hessian(s, [0.1, 0.2, 0.3])
    assert np.allclose(H, H.T, atol=1e-14)


# ---------------------------------------------------------------------------
# B and symmetry operators


def test_b_operator_flat():
    s = spec_named("euclidean3")
    B2 = b_operator(s, 2)
    u = ex.parse("x1^2*x2^2 + x3^2")
    assert B2.at(u, [0.3, 0.2, 0.1]) == pytest.approx(-(2 * 0.09 + 2), rel=1e-14)
    assert b_operator_locality(s, 2).route == "structural"


@pytest.mark.parametrize("name", ROBERTSON)
def test_b_operators_local(name):
    s = spec_named(name)
    for b in range(1, s.r + 1):
        assert b_operator_locality(s, b).local


def test_warped_b_locality_is_structural():
    s = spec_named("warped3")
    assert all(b_operator_locality(s, b).route == "structural" for b in (1, 2))


def test_violator_b_not_local():
    s = spec_named("robertson_violator")
    assert not all(b_operator_locality(s, b).local for b in (1, 2))


@pytest.mark.parametrize("name", ALL)
def test_first_symmetry_operator_is_laplacian(name):
    s = spec_named(name)
    for x in halton_points(s.chart, 4, 0):
        for u in s.tests:
            assert operator_gap(symmetry_operator(s, 1), laplacian(s), u, x) < 1e-11 * max(1, abs(laplacian(s).at(u, x)))


@pytest.mark.parametrize("name", ROBERTSON)
def test_symmetry_operator_equals_minus_t(name):
    s = spec_named(name)
    for a in range(2, s.r + 1):
        for x in halton_points(s.chart, 8, 2):
            for u in s.tests:
                assert operator_gap(symmetry_operator(s, a).scaled(ex.const(-1.0)), t_operator(s, a), u, x) < 1e-9


def test_flat_symmetry_operator_constant_coefficients():
    s = spec_named("euclidean3")
    op = symmetry_operator(s, 2)
    assert all(e.op == "const" for e in op.coefficients())


# ---------------------------------------------------------------------------
# commutators


def test_flat_commutators_zero():
    s = spec_named("euclidean3")
    A, B = laplacian(s), symmetry_operator(s, 2)
    for u in s.tests:
        assert commutator_residual(A, B, u, [0.1, 0.2, 0.3]).residual < 1e-13


@pytest.mark.parametrize("name", ROBERTSON)
def test_commutators_vanish(name):
    s = spec_named(name)
    ops = [laplacian(s)] + [symmetry_operator(s, a) for a in range(2, s.r + 1)]
    worst = 0.0
    for A, B in itertools.combinations(ops, 2):
        for u in s.tests:
            for x in interior_points(s.chart, 16, 0):
                res = commutator_residual(A, B, u, x)
                worst = max(worst, res.residual / res.scale)
    assert worst < 1e-7


def test_violator_commutator_nonzero():
    s = spec_named("robertson_violator")
    A, B = symmetry_operator(s, 2), laplacian(s)
    worst = max(commutator_residual(A, B, u, x).residual
                for u in s.tests for x in interior_points(s.chart, 16, 0))
    assert worst > 1e-3


@pytest.mark.parametrize("name", ["liouville2d", "warped3", "robertson_violator"])
def test_jet_path_matches_symbolic(name):
    s = spec_named(name)
    A, B = laplacian(s), symmetry_operator(s, 2)
    for u in s.tests[:4]:
        for x in interior_points(s.chart, 3, 1):
            sym = commutator_residual(A, B, u, x, path="symbolic")
            jet = commutator_residual(A, B, u, x, path="jet")
            assert sym.path == "symbolic" and jet.path == "jet"
            assert abs(sym.scale - jet.scale) < 1e-9 * sym.scale
            assert abs(sym.residual - jet.residual) < 1e-8 * sym.scale


def test_node_budget_falls_back_to_jets():
    s = spec_named("vandermonde3")
    A, B = laplacian(s), symmetry_operator(s, 3)
    # the budget counts new nodes only, so use a function no other test composes
    u = ex.parse("cos(0.37*x1*x2 + 0.11*x3^2)")
    res = commutator_residual(A, B, u, s.chart.center(), node_limit=50)
    assert res.path == "jet" and res.residual / res.scale < 1e-7
    with pytest.raises(ex.ExpressionTooLarge):
        commutator_residual(A, B, ex.parse("sin(x1*x2*x3)"), s.chart.center(), node_limit=50, path="symbolic")
    with pytest.raises(ValueError):
        commutator_residual(A, B, u, s.chart.center(), path="numeric")
