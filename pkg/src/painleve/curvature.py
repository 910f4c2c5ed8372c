"""Christoffel symbols and Ricci curvature.

Two independent routes to the off-block Ricci components are provided:
the generic formula built from symbolic Christoffel symbols of the
assembled metric, and a closed form that only reads det S and the first
column of cofactors.  Agreement of the two is the numerical certificate
that the Ricci tensor off the block diagonal does not see the block
metrics.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import expr as ex
from .stackel import MetricField, PainleveSpec, metric_at, stackel_jet, StackelJet

_CHRISTOFFEL = weakref.WeakKeyDictionary()
_RICCI_PROGRAM = weakref.WeakKeyDictionary()


@dataclass(frozen=True)
class ChristoffelAtPoint:
    point: np.ndarray
    values: np.ndarray  # values[i, j, k] = Γ^i_{jk}


@dataclass(frozen=True)
class RicciAtPoint:
    point: np.ndarray
    values: np.ndarray


def _field(obj) -> MetricField:
    return obj.metric_field if isinstance(obj, PainleveSpec) else obj


def christoffel_exprs(obj) -> tuple:
    """Symbolic Γ^i_{jk} as a nested ``[i][j][k]`` tuple of Exprs."""
    field = _field(obj)
    cached = _CHRISTOFFEL.get(field)
    if cached is not None:
        return cached
    n, g, ginv = field.n, field.lower, field.inverse
    dg = [[[ex.differentiate(g[a][b], v) for v in field.variables] for b in range(n)] for a in range(n)]
    block_of = {i: b for b in field.blocks for i in b}
    lowered = [[[ex.mul(ex.const(0.5), ex.sub(ex.add(dg[l][k][j], dg[l][j][k]), dg[j][k][l]))
                 for k in range(n)] for j in range(n)] for l in range(n)]
    gamma = []
    for i in range(n):
        rows = []
        for j in range(n):
            row = []
            for k in range(n):
                if k < j:
                    row.append(rows[k][j])
                    continue
                row.append(ex.sum_exprs(ex.mul(ginv[i][l], lowered[l][j][k]) for l in block_of[i]))
            rows.append(tuple(row))
        gamma.append(tuple(rows))
    cached = tuple(gamma)
    _CHRISTOFFEL[field] = cached
    return cached


def christoffel_at(obj, p) -> ChristoffelAtPoint:
    field = _field(obj)
    n = field.n
    gamma = christoffel_exprs(field)
    flat = [gamma[i][j][k] for i in range(n) for j in range(n) for k in range(n)]
    x = np.asarray(obj.point(p) if isinstance(obj, PainleveSpec) else p, dtype=float)
    vals = ex.compile_exprs(flat, field.variables)(x.tolist())
    return ChristoffelAtPoint(x, np.array(vals).reshape(n, n, n))


def _ricci_program(field: MetricField):
    prog = _RICCI_PROGRAM.get(field)
    if prog is None:
        n = field.n
        gamma = christoffel_exprs(field)
        flat = [gamma[i][j][k] for i in range(n) for j in range(n) for k in range(n)]
        derivs = [ex.differentiate(e, v) for e in flat for v in field.variables]
        prog = ex.compile_exprs(flat + derivs, field.variables)
        _RICCI_PROGRAM[field] = prog
    return prog


def ricci_at(obj, p) -> RicciAtPoint:
    """Generic Ricci tensor R_{jk} = ∂_l Γ^l_{jk} - ∂_j Γ^l_{lk} + Γ^m_{jk} Γ^l_{lm} - Γ^m_{lk} Γ^l_{jm}."""
    field = _field(obj)
    n = field.n
    x = np.asarray(obj.point(p) if isinstance(obj, PainleveSpec) else p, dtype=float)
    vals = np.array(_ricci_program(field)(x.tolist()))
    G = vals[:n ** 3].reshape(n, n, n)
    dG = vals[n ** 3:].reshape(n, n, n, n)  # dG[i, j, k, m] = ∂_m Γ^i_{jk}
    trace = np.einsum("llm->m", G)
    R = (np.einsum("ljkl->jk", dG)
         - np.einsum("llkj->jk", dG)
         + np.einsum("mjk,m->jk", G, trace)
         - np.einsum("mlk,ljm->jk", G, G))
    return RicciAtPoint(x, R)


# ---------------------------------------------------------------------------
# closed form from the Stäckel data


def offblock_pairs(spec: PainleveSpec) -> Iterator[tuple[int, int]]:
    """Index pairs ``(j, k)``, ``j < k``, lying in different coordinate groups."""
    group = [spec.chart.group_of[v] for v in spec.variables]
    for j in range(spec.n):
        for k in range(j + 1, spec.n):
            if group[j] != group[k]:
                yield j, k


class _LogJet:
    """First and second derivatives of log|f| from the value, gradient and Hessian of f."""

    def __init__(self, value, grad, hess):
        self.d = grad / value
        self.dd = hess / value - np.outer(grad, grad) / value ** 2

    def __add__(self, other):
        out = object.__new__(_LogJet)
        out.d, out.dd = self.d + other.d, self.dd + other.dd
        return out

    def __sub__(self, other):
        out = object.__new__(_LogJet)
        out.d, out.dd = self.d - other.d, self.dd - other.dd
        return out

    def scaled(self, c):
        out = object.__new__(_LogJet)
        out.d, out.dd = c * self.d, c * self.dd
        return out


def _closed_form(jet: StackelJet, sizes, group, j: int, k: int) -> float:
    r = len(sizes)
    n = sum(sizes)
    a, b = group[j], group[k]
    log_det = _LogJet(jet.det, jet.det_grad, jet.det_hess)
    log_s = [_LogJet(jet.cof[g, 0], jet.cof_grad[g, 0], jet.cof_hess[g, 0]) for g in range(r)]
    log_q = log_det.scaled(n - 2)
    for g in range(r):
        log_q = log_q - log_s[g].scaled(sizes[g])
    log_f = log_det - log_s[a] - log_s[b]
    t = (sizes[a] + sizes[b] - 2) * (log_f.dd[j, k] + log_f.d[j] * log_f.d[k])
    log_h = [log_s[g] - log_det for g in range(r)]
    for g in range(r):
        if g in (a, b):
            continue
        h = log_h[g]
        t += sizes[g] * (h.d[j] * log_h[a].d[k] + log_h[b].d[j] * h.d[k] - (h.dd[j, k] + h.d[j] * h.d[k]))
    return -0.75 * log_q.dd[j, k] + 0.25 * t


def ricci_offblock_closed(spec: PainleveSpec, p, j: int, k: int) -> float:
    """Off-block Ricci component R_{jk} from det S and the cofactors s^{γ1} alone.

    ``j`` and ``k`` are coordinate indices in different groups.  The block
    metrics are never read.
    """
    group = [spec.chart.group_of[v] for v in spec.variables]
    if group[j] == group[k]:
        raise ValueError("closed form applies only to indices in different groups")
    return _closed_form(stackel_jet(spec, p), spec.chart.sizes, group, j, k)


def ricci_offblock_closed_all(spec: PainleveSpec, p) -> dict[tuple[int, int], float]:
    group = [spec.chart.group_of[v] for v in spec.variables]
    jet = stackel_jet(spec, p)
    return {(j, k): _closed_form(jet, spec.chart.sizes, group, j, k) for j, k in offblock_pairs(spec)}


def christoffel_mixed_formula(spec: PainleveSpec, p) -> dict[tuple[int, int, int], float]:
    """Γ^i_{jk} for index triples touching two groups, from the block-wise shortcuts.

    For ``i, k`` in group α and ``j`` in group β ≠ α:
    Γ^i_{kj} = ½ (g^α)^{iq} ∂_j (g_α)_{kq}; and for ``i, k`` in α, ``j`` in β:
    Γ^j_{ik} = -½ (g^β)^{jq} ∂_q (g_α)_{ik}.  Each is valid because the
    metric is block diagonal.
    """
    jet = metric_at(spec, p, order=1)
    ginv, dg = jet.g_inv, jet.g_derivs[1]
    chart = spec.chart
    out = {}
    for a in range(chart.r):
        ia = chart.block_indices(a)
        for b in range(chart.r):
            if a == b:
                continue
            ib = chart.block_indices(b)
            for i in ia:
                for k in ia:
                    for j in ib:
                        out[(i, k, j)] = 0.5 * sum(ginv[i, q] * dg[k, q, j] for q in ia)
                        out[(j, i, k)] = -0.5 * sum(ginv[j, q] * dg[i, k, q] for q in ib)
    return out


@dataclass(frozen=True)
class RicciComparison:
    max_relative_gap: float
    max_offblock: float
    worst_gap_point: np.ndarray | None
    worst_offblock_point: np.ndarray | None
    worst_offblock_pair: tuple[int, int] | None
    sample_count: int


def compare_offblock(spec: PainleveSpec, points) -> RicciComparison:
    """Closed form versus generic Ricci over ``points``; also the largest off-block entry."""
    gap, gap_at = 0.0, None
    big, big_at, big_pair = 0.0, None, None
    points = np.atleast_2d(points)
    for x in points:
        R = ricci_at(spec, x).values
        for (j, k), closed in ricci_offblock_closed_all(spec, x).items():
            rel = abs(closed - R[j, k]) / (1.0 + abs(R[j, k]))
            if rel > gap or gap_at is None:
                gap, gap_at = rel, x
            if abs(R[j, k]) > big or big_at is None:
                big, big_at, big_pair = abs(R[j, k]), x, (j, k)
    return RicciComparison(gap, big, gap_at, big_at, big_pair, len(points))
