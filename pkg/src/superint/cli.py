"""Command line runner for scenario files and the built-in examples.

Exit codes: 0 when every residual and expectation is within tolerance,
1 when one is exceeded, 2 on input errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ParseError, SuperIntError
from .scenario import list_examples, load, load_example, run

_MODES = {"run": "run", "verify-cov": "cov", "verify-stokes": "stokes"}


def _convention(values):
    out = {}
    for item in values or []:
        key, sep, val = item.partition("=")
        if not sep or key not in ("s", "b"):
            raise ParseError(f"--convention expects s=RULE or b=RULE, got {item!r}")
        out[key] = val
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="superint", description="Berezin integrals with boundary terms.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _MODES:
        sp = sub.add_parser(name, help=f"{name} a scenario")
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--example", help="built-in scenario name")
        src.add_argument("--scenario", help="path to a scenario file")
        sp.add_argument("--convention", action="append", metavar="s=RULE",
                        help="sign convention override (s=default|pq-only|half-q, b=default|q)")
        sp.add_argument("--quad-order", type=int, help="Gauss-Legendre nodes per axis")
        sp.add_argument("--tolerance", type=float, help="residual tolerance")
        sp.add_argument("--report", help="write the JSON report here instead of stdout")
        sp.add_argument("--count-terms", action="store_true", help="count structurally nonzero summands")
    sub.add_parser("list-examples", help="list built-in scenarios")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as err:
        return 0 if err.code == 0 else 2
    if args.command == "list-examples":
        for name, desc in list_examples().items():
            print(f"{name:14s} {desc}")
        return 0
    try:
        scn = load_example(args.example) if args.example else load(args.scenario)
        report = run(scn, _MODES[args.command], _convention(args.convention), args.quad_order,
                     args.tolerance, args.count_terms)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except SuperIntError as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        status = "PASS" if report["pass"] else "FAIL"
        line = f"{report['scenario']}: {status} max residual {report['max_residual']:.3e}"
        if "term_count" in report:
            line += f", terms {report['term_count']}"
        print(line)
    else:
        print(text)
    return 0 if report["pass"] else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
