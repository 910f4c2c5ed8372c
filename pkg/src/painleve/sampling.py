"""Deterministic sample points inside a chart's domain box."""

from __future__ import annotations

import itertools
from typing import TYPE_CHECKING

import numpy as np
from scipy.stats import qmc

if TYPE_CHECKING:
    from .stackel import Chart


def halton_points(chart: "Chart", count: int, seed: int = 0) -> np.ndarray:
    """``count`` scrambled-Halton points scaled into the domain box."""
    lo, hi = chart.bounds()
    unit = qmc.Halton(d=chart.n, scramble=True, seed=seed).random(count)
    return lo + unit * (hi - lo)


def corner_points(chart: "Chart") -> np.ndarray:
    lo, hi = chart.bounds()
    return np.array([np.where(mask, hi, lo) for mask in itertools.product((False, True), repeat=chart.n)])


def interior_points(chart: "Chart", count: int, seed: int = 0, margin: float = 0.05) -> np.ndarray:
    """Halton points in the box shrunk by ``margin`` of its width on each side."""
    lo, hi = chart.bounds()
    width = hi - lo
    unit = qmc.Halton(d=chart.n, scramble=True, seed=seed).random(count)
    return lo + margin * width + unit * (1 - 2 * margin) * width


def validation_points(chart: "Chart", count: int = 128, seed: int = 0) -> np.ndarray:
    return np.vstack([halton_points(chart, count, seed), corner_points(chart)])
