"""The single tolerance table every check reads from."""

from __future__ import annotations

TOLERANCES: dict[str, float] = {
    # algebraic identities evaluated directly
    "metric": 1e-12,
    "cofactor": 1e-12,
    # identities involving one differentiation
    "single_derivative": 1e-10,
    "christoffel": 1e-10,
    "elimination": 1e-10,
    # Laplacian-level (two derivatives)
    "laplacian": 1e-9,
    "killing": 1e-9,
    "poisson": 1e-9,
    "eisenhart": 1e-9,
    "levi_civita": 1e-9,
    "ricci": 1e-8,
    "conformal_law": 1e-8,
    # order-four compositions
    "commutator": 1e-7,
    # quantities limited by quadrature, splines or ODE solves
    "separation": 1e-6,
    "hamilton_jacobi": 1e-6,
    "rank": 1e-3,
    "end_to_end": 2e-4,
    "drift": 1e-7,
    "newton": 1e-10,
}

# a violated identity must exceed this to count as a clear failure
VIOLATION_FLOOR = 1e-3


def tolerance(name: str, scale: float = 1.0) -> float:
    return TOLERANCES[name] * scale
