"""Quadratic first integrals of a Painlevé metric and the identities they satisfy.

Block labels ``alpha, beta, ...`` are 1-based, as in ``K_(1) = H``;
coordinate indices ``i, j, k`` are 0-based positions in ``spec.variables``.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import expr as ex
from .curvature import christoffel_exprs
from .errors import SpecError
from .expr import Expr
from .stackel import MetricField, PainleveSpec, stackel_jet

_TENSORS = weakref.WeakKeyDictionary()
_PROGRAMS: dict = {}

Tensor = tuple[tuple[Expr, ...], ...]


@dataclass(frozen=True)
class KillingTensorSet:
    """Contravariant ``K_(α)^{ij}`` for α = 1..r; off-block entries are zero."""

    tensors: tuple[Tensor, ...]

    def of(self, alpha: int) -> Tensor:
        return self.tensors[alpha - 1]

    def __len__(self) -> int:
        return len(self.tensors)


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    p: np.ndarray

    @classmethod
    def make(cls, x, p) -> "PhasePoint":
        return cls(np.asarray(x, dtype=float), np.asarray(p, dtype=float))


def _check_alpha(spec: PainleveSpec, *labels: int) -> None:
    for a in labels:
        if not 1 <= a <= spec.r:
            raise SpecError(f"block label {a} outside 1..{spec.r}")


def killing_tensors(spec: PainleveSpec) -> KillingTensorSet:
    """``K_(α)^{iβ jβ} = (s^{βα} / det S) (G^β)^{iβ jβ}``."""
    cached = _TENSORS.get(spec)
    if cached is not None:
        return cached
    n, r = spec.n, spec.r
    out = []
    for alpha in range(r):
        K = [[ex.ZERO] * n for _ in range(n)]
        for b in range(r):
            weight = ex.div(spec.cofactors[b][alpha], spec.det_s)
            Ginv = spec.block_inverses[b]
            idx = spec.chart.block_indices(b)
            for p, i in enumerate(idx):
                for q, j in enumerate(idx):
                    K[i][j] = ex.mul(weight, Ginv[p][q])
        out.append(tuple(tuple(row) for row in K))
    cached = KillingTensorSet(tuple(out))
    _TENSORS[spec] = cached
    return cached


def _tensor_program(K: Tensor, variables: Sequence[str]):
    """Compiled values and first partials of a contravariant tensor."""
    key = (tuple(id(e) for row in K for e in row), tuple(variables))
    prog = _PROGRAMS.get(key)
    if prog is None:
        flat = [e for row in K for e in row]
        prog = ex.compile_exprs(flat + [ex.differentiate(e, v) for e in flat for v in variables], variables)
        # keep the Exprs alive so the id-based key stays valid
        _PROGRAMS[key] = prog = (prog, flat)
    return prog[0]


def _tensor_jet(K: Tensor, variables: Sequence[str], x) -> tuple[np.ndarray, np.ndarray]:
    n = len(variables)
    vals = np.array(_tensor_program(K, variables)(list(np.asarray(x, dtype=float))))
    return vals[:n * n].reshape(n, n), vals[n * n:].reshape(n, n, n)


def quadratic_form(K: Tensor, variables: Sequence[str], x, p) -> float:
    A, _ = _tensor_jet(K, variables, x)
    p = np.asarray(p, dtype=float)
    return float(p @ A @ p)


def quadratic_integral_value(spec: PainleveSpec, alpha: int, pp: PhasePoint) -> float:
    """``K_(α)^{ij}(x) p_i p_j``."""
    _check_alpha(spec, alpha)
    return quadratic_form(killing_tensors(spec).of(alpha), spec.variables, pp.x, pp.p)


def bracket_of_tensors(A: Tensor, B: Tensor, variables: Sequence[str], x, p) -> float:
    """Canonical bracket of ``A^{ij} p_i p_j`` and ``B^{ij} p_i p_j``.

    ``{F, G} = Σ_i ∂_{x_i}F ∂_{p_i}G - ∂_{p_i}F ∂_{x_i}G``.  The
    x-derivatives come from symbolic differentiation of the components;
    p-derivatives are exact (``∂_{p_i} F = 2 A^{ik} p_k``).
    """
    p = np.asarray(p, dtype=float)
    a, da = _tensor_jet(A, variables, x)
    b, db = _tensor_jet(B, variables, x)
    dxF = np.einsum("jki,j,k->i", da, p, p)
    dxG = np.einsum("jki,j,k->i", db, p, p)
    dpF = 2 * a @ p
    dpG = 2 * b @ p
    return float(dxF @ dpG - dpF @ dxG)


def poisson_bracket(spec: PainleveSpec, alpha: int, beta: int, pp: PhasePoint) -> float:
    _check_alpha(spec, alpha, beta)
    ks = killing_tensors(spec)
    return bracket_of_tensors(ks.of(alpha), ks.of(beta), spec.variables, pp.x, pp.p)


# ---------------------------------------------------------------------------
# Killing equation


def _lowered(field: MetricField, K: Tensor) -> list[list[Expr]]:
    n, g = field.n, field.lower
    block_of = {i: b for b in field.blocks for i in b}
    out = [[ex.ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            out[i][j] = out[j][i] = ex.sum_exprs(
                ex.mul(ex.mul(g[i][a], K[a][b]), g[b][j]) for a in block_of[i] for b in block_of[j])
    return out


def killing_residual_tensor(field: MetricField | PainleveSpec, K: Tensor, x) -> float:
    """max over (i, j, k) of |∇_i K_jk + ∇_j K_ki + ∇_k K_ij| for a contravariant ``K``.

    ``K`` is lowered with the metric before differentiation, so ``K`` may
    be any symmetric tensor (it need not be block diagonal).
    """
    if isinstance(field, PainleveSpec):
        field = field.metric_field
    n = field.n
    key = ("killing", id(field), tuple(id(e) for row in K for e in row))
    prog = _PROGRAMS.get(key)
    if prog is None:
        # lowering mixes blocks when K does; use the full metric for that
        full = MetricField(field.variables, field.lower, [list(range(n))]) if _mixes(field, K) else field
        low = _lowered(full, K)
        gamma = christoffel_exprs(field)
        flat = [e for row in low for e in row]
        d = [ex.differentiate(e, v) for e in flat for v in field.variables]
        gflat = [gamma[i][j][k] for i in range(n) for j in range(n) for k in range(n)]
        prog = (ex.compile_exprs(flat + d + gflat, field.variables), K, field)
        _PROGRAMS[key] = prog
    vals = np.array(prog[0](list(np.asarray(x, dtype=float))))
    Kl = vals[:n * n].reshape(n, n)
    dK = vals[n * n:n * n + n ** 3].reshape(n, n, n)  # dK[j, k, i] = ∂_i K_jk
    G = vals[n * n + n ** 3:].reshape(n, n, n)         # G[m, i, j] = Γ^m_ij
    nabla = np.einsum("jki->ijk", dK) - np.einsum("mij,mk->ijk", G, Kl) - np.einsum("mik,jm->ijk", G, Kl)
    sym = nabla + np.einsum("ijk->jki", nabla) + np.einsum("ijk->kij", nabla)
    return float(np.max(np.abs(sym)))


def _mixes(field: MetricField, K: Tensor) -> bool:
    block_of = {i: b for b in field.blocks for i in b}
    n = field.n
    return any(block_of[i] != block_of[j] and K[i][j] is not ex.ZERO for i in range(n) for j in range(n))


def killing_equation_residual(spec: PainleveSpec, alpha: int, x) -> float:
    _check_alpha(spec, alpha)
    return killing_residual_tensor(spec.metric_field, killing_tensors(spec).of(alpha), spec.point(x))


# ---------------------------------------------------------------------------
# Killing-Eisenhart and Levi-Civita identities (Stäckel data only)


def rho_table(spec: PainleveSpec, x) -> np.ndarray:
    """``rho[β-1, γ-1] = s^{γβ} / s^{γ1}``; the first row is all ones."""
    jet = stackel_jet(spec, x)
    return (jet.cof / jet.cof[:, :1]).T


def _group(spec: PainleveSpec, j: int) -> int:
    return spec.chart.group_of[spec.variables[j]] + 1


def killing_eisenhart_residual(spec: PainleveSpec, x, beta: int, delta: int, gamma: int, j: int) -> float:
    """|∂_j ρ_βδ - (ρ_βγ - ρ_βδ) ∂_j log(s^{δ1}/det S)| for ``j`` in group γ."""
    _check_alpha(spec, beta, delta, gamma)
    if _group(spec, j) != gamma:
        raise ValueError(f"coordinate {spec.variables[j]} is not in group {gamma}")
    jet = stackel_jet(spec, x)
    b, d, g = beta - 1, delta - 1, gamma - 1
    rho = lambda col, c: jet.cof[c, col] / jet.cof[c, 0]
    s, ds = jet.cof[d, 0], jet.cof_grad[d, 0, j]
    t, dt = jet.cof[d, b], jet.cof_grad[d, b, j]
    d_rho = (dt * s - t * ds) / s ** 2
    d_log = ds / s - jet.det_grad[j] / jet.det
    return abs(d_rho - (rho(b, g) - rho(b, d)) * d_log)


def _log_h(jet, g: int, j: int, k: int):
    """∂_j, ∂_k and (1/h) ∂_j∂_k of h = s^{g1}/det S."""
    D, dD, hD = jet.det, jet.det_grad, jet.det_hess
    s, ds, hs = jet.cof[g, 0], jet.cof_grad[g, 0], jet.cof_hess[g, 0]
    lj = ds[j] / s - dD[j] / D
    lk = ds[k] / s - dD[k] / D
    ljk = (hs[j, k] / s - ds[j] * ds[k] / s ** 2) - (hD[j, k] / D - dD[j] * dD[k] / D ** 2)
    return lj, lk, ljk + lj * lk


def levi_civita_residual(spec: PainleveSpec, x, alpha: int, beta: int, gamma: int, j: int, k: int) -> float:
    """Absolute left side of the generalized Levi-Civita condition for ``j`` in α, ``k`` in β."""
    _check_alpha(spec, alpha, beta, gamma)
    if alpha == beta:
        raise ValueError("the Levi-Civita conditions couple two different groups")
    if _group(spec, j) != alpha or _group(spec, k) != beta:
        raise ValueError("coordinate indices do not lie in the stated groups")
    jet = stackel_jet(spec, x)
    gj, gk, g_second = _log_h(jet, gamma - 1, j, k)
    _, ak, _ = _log_h(jet, alpha - 1, j, k)
    bj, _, _ = _log_h(jet, beta - 1, j, k)
    return abs(gj * ak + bj * gk - g_second)


def second_order_residual(spec: PainleveSpec, x, alpha: int, beta: int, j: int, k: int) -> float:
    """|∂_j ∂_k (det S / (s^{α1} s^{β1}))| for ``j`` in α, ``k`` in β."""
    _check_alpha(spec, alpha, beta)
    F = ex.div(spec.det_s, ex.mul(spec.cofactors[alpha - 1][0], spec.cofactors[beta - 1][0]))
    dd = ex.differentiate(ex.differentiate(F, spec.variables[j]), spec.variables[k])
    return abs(ex.compile_exprs([dd], spec.variables)(list(spec.point(x)))[0])


def identity_index_tuples(spec: PainleveSpec):
    """All (α, β, j, k) with j in α, k in β, α ≠ β."""
    group = [_group(spec, j) for j in range(spec.n)]
    for j in range(spec.n):
        for k in range(spec.n):
            if group[j] != group[k]:
                yield group[j], group[k], j, k
