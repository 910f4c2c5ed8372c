import csv

import numpy as np
import pytest

from painleve import catalogue, expr as ex
from painleve.checks import geodesic_start
from painleve.dynamics import (first_integral_drift, geodesic_integrate, hamilton_rhs, max_drift,
                               time_reversal_error)
from painleve.errors import NumericalError, SpecError
from painleve.killing import killing_tensors
from conftest import ALL, spec_named


def test_flat_straight_lines():
    s = spec_named("euclidean3")
    x0, p0 = np.array([0.1, -0.2, 0.0]), np.array([0.01, 0.02, -0.03])
    traj = geodesic_integrate(s, x0, p0, 5.0, 0.01)
    expected = x0 + 2 * np.outer(traj.t, p0)
    assert np.max(np.abs(traj.x - expected)) < 1e-14
    assert np.all(traj.p == p0)
    assert max_drift(traj) < 1e-15


def test_time_grid_and_domain():
    s = spec_named("liouville2d")
    traj = geodesic_integrate(s, [0.0, 0.0], [0.05, 0.02], 1.0, 0.01)
    assert np.all(np.diff(traj.t) > 0) and traj.t[-1] == pytest.approx(1.0)
    assert all(s.chart.contains(x) for x in traj.x)


def test_halts_at_domain_exit():
    s = spec_named("euclidean3")
    traj = geodesic_integrate(s, [0.0, 0.0, 0.0], [0.5, 0.0, 0.0], 10.0, 0.01)
    assert traj.exited and traj.t[-1] < 10.0
    assert all(s.chart.contains(x) for x in traj.x)


def test_input_errors():
    s = spec_named("euclidean3")
    with pytest.raises(SpecError):
        geodesic_integrate(s, [0, 0, 0], [1, 0, 0], 1.0, 0.0)
    with pytest.raises(SpecError):
        geodesic_integrate(s, [2, 0, 0], [1, 0, 0], 1.0, 0.1)
    with pytest.raises(SpecError):
        geodesic_integrate(s, [0, 0], [1, 0], 1.0, 0.1)
    with pytest.raises(NumericalError):
        geodesic_integrate(s, [0.49, 0, 0], [100.0, 0, 0], 1.0, 0.1)


def test_rhs_against_fd_of_hamiltonian():
    s = spec_named("warped3")
    rhs = hamilton_rhs(s)
    K = killing_tensors(s).of(1)
    f = ex.compile_exprs([e for row in K for e in row], s.variables)
    H = lambda x, p: p @ np.array(f(list(x))).reshape(3, 3) @ p
    x, p = np.array([0.1, 0.2, -0.1]), np.array([0.3, -0.4, 0.5])
    dx, dp = rhs(x, p)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        assert dx[k] == pytest.approx((H(x, p + e) - H(x, p - e)) / (2 * h), abs=1e-8)
        assert dp[k] == pytest.approx(-(H(x + e, p) - H(x - e, p)) / (2 * h), abs=1e-8)


@pytest.mark.parametrize("name", ["di_pirro", "vandermonde2", "vandermonde3"])
def test_long_run_drift(name):
    s = spec_named(name)
    x0, p0 = geodesic_start(s, 10.0)
    traj = geodesic_integrate(s, x0, p0, 10.0, 1e-3)
    assert not traj.exited
    assert first_integral_drift(traj, 1) < 1e-8
    for a in range(1, s.r + 1):
        assert first_integral_drift(traj, a) < 1e-7


def test_drift_labels():
    s = spec_named("liouville2d")
    traj = geodesic_integrate(s, [0.0, 0.0], [0.05, 0.02], 0.1, 0.01)
    with pytest.raises(SpecError):
        first_integral_drift(traj, 3)
    assert traj.H is traj.K[:, 0] or np.array_equal(traj.H, traj.K[:, 0])


def _study(s, x0, p0, T, dts):
    return [max_drift(geodesic_integrate(s, x0, p0, T, dt)) for dt in dts]


@pytest.mark.parametrize("name", ["di_pirro", "liouville2d", "warped3", "vandermonde3", "robertson_violator"])
def test_fourth_order_convergence(name):
    s = spec_named(name)
    x0, p0 = geodesic_start(s, 2.0)
    drifts = _study(s, x0, 10 * p0, 2.0, (0.05, 0.025, 0.0125))
    for coarse, fine in zip(drifts, drifts[1:]):
        assert 12 < coarse / fine < 20


def test_time_reversal():
    for name in ("euclidean3", "liouville2d"):
        s = spec_named(name)
        x0, p0 = geodesic_start(s, 10.0)
        assert time_reversal_error(s, x0, 2 * p0, 10.0, 1e-2) < 1e-6


def test_time_reversal_refuses_exit():
    s = spec_named("euclidean3")
    with pytest.raises(NumericalError):
        time_reversal_error(s, [0.0, 0.0, 0.0], [0.2, 0.0, 0.0], 10.0, 0.01)


def test_wrong_tensor_drifts():
    s = spec_named("di_pirro")
    K = [list(row) for row in catalogue.di_pirro_integral()]
    K[0][0] = ex.mul(ex.const(2.0), K[0][0])
    x0 = np.array([0.3, -0.3, 0.0])
    traj = geodesic_integrate(s, x0, [-0.15, 0.15, 0.2], 1.0, 1e-3, tensors=(tuple(map(tuple, K)),))
    assert not traj.exited
    k = traj.K[:, 0]
    assert np.max(np.abs(k - k[0])) / (1 + abs(k[0])) > 1e-3


def test_trajectory_csv(tmp_path):
    s = spec_named("warped3")
    traj = geodesic_integrate(s, [0.0, 0.0, 0.0], [0.01, 0.02, 0.03], 0.05, 0.01)
    traj.to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "x1", "x2", "x3", "p_x1", "p_x2", "p_x3", "H", "K_2"]
    assert len(rows) == len(traj.t) + 1
