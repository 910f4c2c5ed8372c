"""Command line entry point: ``painleve <command> [spec.json | --example NAME]``.

Exit status: 0 when every check passes (skips allowed), 1 when a check
fails, 2 for unusable input, 3 for a numerical breakdown.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, catalogue, specfile
from .checks import FAIL, PASS, SKIP, SUITES, Options, run_suites
from .errors import NumericalError, SpecError
from .expr import EvaluationError, ExprSyntaxError

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3

COMMANDS = {name: [name] for name in SUITES}
COMMANDS["report"] = list(SUITES)

HELP = {
    "validate": "Painlevé conditions and metric assembly",
    "robertson": "both Robertson formulations",
    "ricci": "off-block Ricci, generic vs closed form",
    "killing": "Killing, Poisson, Killing-Eisenhart and Levi-Civita residuals",
    "commute": "commutators of the symmetry operators",
    "separate": "Hamilton-Jacobi and Helmholtz separation, rank conditions",
    "conformal": "R factor, conformal law, conformal-factor equation",
    "geodesic": "geodesic flow and first-integral drift",
    "report": "every suite in one document",
}


def build_document(spec, command: str, checks, opt: Options) -> dict:
    counts = {v: sum(c.verdict == v for c in checks) for v in (PASS, FAIL, SKIP)}
    return {
        "schema": specfile.SCHEMA,
        "tool": "painleve",
        "version": __version__,
        "command": command,
        "spec": spec.name,
        "spec_hash": specfile.spec_hash(spec),
        "seed": opt.seed,
        "samples": opt.samples,
        "tol_scale": opt.tol_scale,
        "checks": [c.to_dict() for c in checks],
        "summary": counts,
    }


def render_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.3e}"


def render_text(doc: dict) -> str:
    lines = [f"{doc['spec']}  [{doc['command']}]  seed={doc['seed']} samples={doc['samples']}"]
    width = max((len(c["name"]) for c in doc["checks"]), default=4)
    for c in doc["checks"]:
        line = f"  {c['verdict'].upper():4s}  {c['name']:{width}s}  residual {_fmt(c['max_residual'])}"
        if c["tolerance"] is not None:
            line += f"  tol {_fmt(c['tolerance'])}"
        if c["verdict"] == FAIL and c["worst_point"] is not None:
            line += "  at (" + ", ".join(f"{t:.4g}" for t in c["worst_point"]) + ")"
        if c["verdict"] == FAIL and c["detail"]:
            line += "  " + " ".join(f"{k}={v}" for k, v in sorted(c["detail"].items()))
        if c["verdict"] == SKIP and c["notes"]:
            line += f"  ({c['notes']})"
        lines.append(line)
    s = doc["summary"]
    lines.append(f"  {s[PASS]} passed, {s[FAIL]} failed, {s[SKIP]} skipped")
    return "\n".join(lines) + "\n"


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="painleve", description="Verify Painlevé metrics numerically.")
    parser.add_argument("--version", action="version", version=f"painleve {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("spec", nargs="?", help="JSON spec file")
        p.add_argument("--example", help="catalogue entry instead of a file")
        p.add_argument("--json", dest="json_path", help="write the report document here ('-' for stdout)")
        p.add_argument("--samples", type=int, default=64)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol-scale", type=float, default=1.0)
        if name in ("conformal", "report"):
            p.add_argument("--solve", action="store_true", help="also run the grid solver on the conformal data")
        if name in ("geodesic", "report"):
            p.add_argument("--time", type=float, default=10.0, help="integration time")
            p.add_argument("--dt", type=float, default=1e-3)
    dump = sub.add_parser("dump", help="print a catalogue entry as a JSON spec")
    dump.add_argument("example")
    sub.add_parser("list", help="list catalogue entries")
    return parser


def _load(args):
    if (args.spec is None) == (args.example is None):
        raise SpecError("give exactly one of a spec file or --example")
    if args.example is not None:
        return catalogue.get(args.example)
    return specfile.load(args.spec)


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "list":
            for name, e in sorted(catalogue.CATALOGUE.items()):
                print(f"{name:24s} robertson={'yes' if e.robertson else 'no':3s} {e.note}")
            return EXIT_OK
        if args.command == "dump":
            sys.stdout.write(specfile.dumps(catalogue.get(args.example)))
            return EXIT_OK
        if args.samples < 1 or args.tol_scale <= 0:
            raise SpecError("--samples must be positive and --tol-scale > 0")
        opt = Options(samples=args.samples, seed=args.seed, tol_scale=args.tol_scale,
                      solve=getattr(args, "solve", False), T=getattr(args, "time", 10.0),
                      dt=getattr(args, "dt", 1e-3))
        spec = _load(args)
        checks = run_suites(spec, COMMANDS[args.command], opt)
    except (SpecError, ExprSyntaxError) as err:
        print(f"painleve: input error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as err:
        where = "" if err.point is None else f" near {err.point}"
        print(f"painleve: numerical failure: {err}{where}", file=sys.stderr)
        return EXIT_NUMERICAL
    except EvaluationError as err:
        print(f"painleve: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    doc = build_document(spec, args.command, checks, opt)
    if args.json_path == "-":
        sys.stdout.write(render_json(doc))
    else:
        sys.stdout.write(render_text(doc))
        if args.json_path:
            Path(args.json_path).write_text(render_json(doc))
    return EXIT_FAIL if doc["summary"][FAIL] else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
