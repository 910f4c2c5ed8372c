"""Geodesic flow of H = g^{ij} p_i p_j and conservation of the quadratic integrals."""

from __future__ import annotations

import csv
import weakref
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import expr as ex
from .errors import NumericalError, SpecError
from .killing import Tensor, killing_tensors
from .stackel import PainleveSpec

_PROGRAMS = weakref.WeakKeyDictionary()


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution of Hamilton's equations.

    ``K[:, α-1]`` holds K_(α)(t); column 0 is H itself.  ``exited`` is
    set when integration stopped early because the next step would
    leave the domain box.
    """

    spec: PainleveSpec
    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    K: np.ndarray
    dt: float
    exited: bool = False

    @property
    def H(self) -> np.ndarray:
        return self.K[:, 0]

    def to_csv(self, path) -> None:
        n, r = self.spec.n, self.spec.r
        head = (["t"] + list(self.spec.variables) + [f"p_{v}" for v in self.spec.variables]
                + ["H"] + [f"K_{a}" for a in range(2, r + 1)])
        with open(Path(path), "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(head)
            for k in range(len(self.t)):
                row = [self.t[k], *self.x[k], *self.p[k], *self.K[k]]
                out.writerow([repr(float(v)) for v in row])


def _flow_program(spec: PainleveSpec):
    """Compiled g^{ij} followed by ∂_k g^{ij}, flattened."""
    prog = _PROGRAMS.get(spec)
    if prog is None:
        flat = [e for row in spec.inverse_metric for e in row]
        prog = ex.compile_exprs(flat + [ex.differentiate(e, v) for e in flat for v in spec.variables],
                                spec.variables)
        _PROGRAMS[spec] = prog
    return prog


def _tensor_program(K: Tensor, variables):
    return ex.compile_exprs([e for row in K for e in row], variables)


def hamilton_rhs(spec: PainleveSpec):
    """Return ``f(x, p) -> (dx/dt, dp/dt)`` with ẋ = 2 g^{-1} p and ṗ_k = -∂_k g^{ij} p_i p_j."""
    prog = _flow_program(spec)
    n = spec.n

    def rhs(x, p):
        with np.errstate(all="ignore"):
            vals = np.array(prog(list(x)), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise NumericalError("inverse metric or its derivatives are not finite", point=np.asarray(x))
        ginv = vals[:n * n].reshape(n, n)
        dginv = vals[n * n:].reshape(n, n, n)  # [i, j, k] = ∂_k g^{ij}
        return 2.0 * ginv @ p, -np.einsum("ijk,i,j->k", dginv, p, p)

    return rhs


def geodesic_integrate(spec: PainleveSpec, x0, p0, T: float, dt: float,
                       tensors: tuple[Tensor, ...] | None = None) -> Trajectory:
    """Classical RK4 for the geodesic Hamiltonian, recording H and each K_(α).

    Integration stops before the first step whose stages leave the domain
    box; the trajectory up to that point is returned with ``exited`` set.
    ``tensors`` replaces the recorded integrals (for sensitivity probes).
    """
    if dt <= 0 or T <= 0:
        raise SpecError("T and dt must be positive")
    if dt > T:
        raise SpecError(f"step {dt} is longer than the integration time {T}")
    x = np.asarray(x0, dtype=float).copy()
    p = np.asarray(p0, dtype=float).copy()
    if x.shape != (spec.n,) or p.shape != (spec.n,):
        raise SpecError(f"state must have {spec.n} components")
    if not spec.chart.contains(x):
        raise SpecError(f"initial point {x.tolist()} is outside the domain")
    rhs = hamilton_rhs(spec)
    tensors = killing_tensors(spec).tensors if tensors is None else tensors
    progs = [_tensor_program(K, spec.variables) for K in tensors]
    n = spec.n

    def integrals(x, p):
        return [float(p @ np.array(pr(list(x))).reshape(n, n) @ p) for pr in progs]

    steps = int(round(T / dt))
    ts, xs, ps, ks = [0.0], [x.copy()], [p.copy()], [integrals(x, p)]
    exited = False
    inside = spec.chart.contains
    for k in range(steps):
        k1x, k1p = rhs(x, p)
        xa = x + 0.5 * dt * k1x
        if not inside(xa):
            exited = True
            break
        k2x, k2p = rhs(xa, p + 0.5 * dt * k1p)
        xb = x + 0.5 * dt * k2x
        if not inside(xb):
            exited = True
            break
        k3x, k3p = rhs(xb, p + 0.5 * dt * k2p)
        xc = x + dt * k3x
        if not inside(xc):
            exited = True
            break
        k4x, k4p = rhs(xc, p + dt * k3p)
        xn = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        pn = p + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(pn))):
            raise NumericalError(f"non-finite state after t = {ts[-1]}", point=x)
        if not inside(xn):
            exited = True
            break
        x, p = xn, pn
        ts.append((k + 1) * dt)
        xs.append(x.copy())
        ps.append(p.copy())
        ks.append(integrals(x, p))
    if len(ts) == 1:
        raise NumericalError("trajectory leaves the domain in the first step", point=x)
    return Trajectory(spec, np.array(ts), np.array(xs), np.array(ps), np.array(ks), dt, exited)


def first_integral_drift(traj: Trajectory, alpha: int) -> float:
    """max_t |K_(α)(t) - K_(α)(0)| / (1 + |K_(α)(0)|); α = 1 is H."""
    if not 1 <= alpha <= traj.K.shape[1]:
        raise SpecError(f"integral label {alpha} outside 1..{traj.K.shape[1]}")
    k = traj.K[:, alpha - 1]
    return float(np.max(np.abs(k - k[0])) / (1.0 + abs(k[0])))


def max_drift(traj: Trajectory) -> float:
    return max(first_integral_drift(traj, a) for a in range(1, traj.K.shape[1] + 1))


def time_reversal_error(spec: PainleveSpec, x0, p0, T: float, dt: float) -> float:
    """Integrate forward, flip the momentum, integrate back; max deviation from (x0, -p0)."""
    fwd = geodesic_integrate(spec, x0, p0, T, dt)
    if fwd.exited:
        raise NumericalError("forward trajectory left the domain", point=fwd.x[-1])
    back = geodesic_integrate(spec, fwd.x[-1], -fwd.p[-1], T, dt)
    if back.exited:
        raise NumericalError("reversed trajectory left the domain", point=back.x[-1])
    return float(max(np.max(np.abs(back.x[-1] - np.asarray(x0))),
                     np.max(np.abs(back.p[-1] + np.asarray(p0)))))
