"""JSON serialization of specs.

Document layout (schema "v1")::

    {"schema": "v1", "name": ...,
     "chart": {"variables": [...], "blocks": [[...], ...], "domain": {var: [lo, hi]}},
     "stackel": [[expr, ...], ...],
     "block_metrics": [[[expr, ...], ...], ...],
     "tests": {"functions": [expr, ...]},
     "conformal": {"c": expr, "lambda": x, "a1": x, "phi": [expr, ...]}}

``tests`` and ``conformal`` are optional.  Expressions are strings in the
syntax accepted by :func:`painleve.expr.parse`.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

from . import expr as ex
from .errors import SpecError
from .stackel import ConformalData, PainleveSpec

SCHEMA = "v1"


def _expr(text: Any, where: str) -> ex.Expr:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return ex.const(float(text))
    if not isinstance(text, str):
        raise SpecError(f"{where}: expected an expression string, got {type(text).__name__}")
    try:
        return ex.parse(text)
    except ex.ExprSyntaxError as err:
        raise SpecError(f"{where}: {err}") from None


def _require(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise SpecError(f"{where}: missing key {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise SpecError(f"{where}.{key}: wrong type {type(value).__name__}")
    return value


def spec_from_dict(doc: dict) -> PainleveSpec:
    if not isinstance(doc, dict):
        raise SpecError("spec document must be a JSON object")
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise SpecError(f"unsupported schema {schema!r}")
    chart = _require(doc, "chart", dict, "spec")
    variables = _require(chart, "variables", list, "chart")
    blocks = _require(chart, "blocks", list, "chart")
    domain = _require(chart, "domain", dict, "chart")
    if sorted(v for b in blocks for v in b) != sorted(variables):
        raise SpecError("chart.blocks must partition chart.variables")
    for v in variables:
        if v not in domain:
            raise SpecError(f"chart.domain has no interval for {v!r}")
    stackel = [[_expr(e, f"stackel[{a}][{b}]") for b, e in enumerate(row)]
               for a, row in enumerate(_require(doc, "stackel", list, "spec"))]
    metrics = [[[_expr(e, f"block_metrics[{a}][{i}][{j}]") for j, e in enumerate(row)] for i, row in enumerate(G)]
               for a, G in enumerate(_require(doc, "block_metrics", list, "spec"))]
    tests = [_expr(e, f"tests.functions[{k}]") for k, e in enumerate(doc.get("tests", {}).get("functions", []))]
    conformal = None
    if doc.get("conformal") is not None:
        c = doc["conformal"]
        try:
            conformal = ConformalData(_expr(c["c"], "conformal.c"), float(c["lambda"]), float(c["a1"]),
                                      tuple(_expr(e, f"conformal.phi[{k}]") for k, e in enumerate(c["phi"])))
        except (KeyError, TypeError, ValueError) as err:
            raise SpecError(f"conformal: malformed entry ({err})") from None
    # the chart ordering follows the blocks; "variables" only fixes the set
    try:
        dom = {v: tuple(float(t) for t in domain[v]) for v in variables}
    except (TypeError, ValueError):
        raise SpecError("chart.domain intervals must be pairs of numbers") from None
    return PainleveSpec.make(blocks, dom, stackel, metrics, tests=tests, conformal=conformal,
                             name=str(doc.get("name", "spec")))


def spec_to_dict(spec: PainleveSpec) -> dict:
    s = ex.to_string
    doc = {
        "schema": SCHEMA,
        "name": spec.name,
        "chart": {
            "variables": list(spec.variables),
            "blocks": [list(b) for b in spec.chart.blocks],
            "domain": {v: list(spec.chart.interval(v)) for v in spec.variables},
        },
        "stackel": [[s(e) for e in row] for row in spec.stackel],
        "block_metrics": [[[s(e) for e in row] for row in G] for G in spec.block_metrics],
        "tests": {"functions": [s(e) for e in spec.tests]},
    }
    if spec.conformal is not None:
        c = spec.conformal
        doc["conformal"] = {"c": s(c.c), "lambda": c.lam, "a1": c.a1, "phi": [s(e) for e in c.phi]}
    return doc


def dumps(spec: PainleveSpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2, sort_keys=True) + "\n"


def loads(text: str) -> PainleveSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise SpecError(f"invalid JSON: {err}") from None
    return spec_from_dict(doc)


def load(path) -> PainleveSpec:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise SpecError(f"cannot read {path}: {err.strerror}") from None
    return loads(text)


def dump(spec: PainleveSpec, path) -> None:
    Path(path).write_text(dumps(spec))


def spec_hash(spec: PainleveSpec) -> str:
    """sha256 of the canonical JSON form."""
    return hashlib.sha256(dumps(spec).encode()).hexdigest()
