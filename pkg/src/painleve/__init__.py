"""Numerical verification toolkit for Painlevé (block Stäckel) metrics.

Submodules: ``expr`` (symbolic expressions), ``stackel`` (spec data and
metric assembly), ``curvature``, ``killing``, ``operators``,
``separation``, ``conformal``, ``dynamics``, ``catalogue`` and ``cli``.
"""

__version__ = "0.1.0"

from .errors import NumericalError, SpecError
from .stackel import Chart, ConformalData, MetricField, PainleveSpec, validate_spec

__all__ = ["Chart", "ConformalData", "MetricField", "NumericalError", "PainleveSpec", "SpecError",
           "validate_spec", "__version__"]
