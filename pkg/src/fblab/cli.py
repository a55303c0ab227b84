"""Command-line entry point.

Subcommands:
    run                solve a scenario and write its report/artifacts
    validate-operator  structural hypothesis checks on an operator JSON
    compare            per-metric delta table between two run reports
    dump-info          print the header of a binary field dump
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .operators import check_structure, load_operator
from .scenario import Scenario, ScenarioError, compare_reports, run_scenario


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fblab",
                                description="half-disk free-boundary laboratory")
    p.add_argument("--version", action="version", version=f"fblab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario")
    run.add_argument("--scenario", required=True, help="scenario JSON path")
    run.add_argument("--out", default=None, help="output directory "
                     "(default: scenario's output_dir or ./out/<name>)")
    run.add_argument("--seed", type=int, default=0, help="structure-check seed")
    run.add_argument("--normalize-report", action="store_true",
                     help="null out wall-clock timings for byte-stable reports")

    val = sub.add_parser("validate-operator", help="check structural hypotheses")
    val.add_argument("operator", help="operator JSON path")
    val.add_argument("--seed", type=int, default=0)
    val.add_argument("--samples", type=int, default=256)

    cmp_ = sub.add_parser("compare", help="diff two run reports")
    cmp_.add_argument("report_a")
    cmp_.add_argument("report_b")

    info = sub.add_parser("dump-info", help="print a field dump header")
    info.add_argument("dump", help="field dump path")
    return p


def _cmd_run(args) -> int:
    try:
        sc = Scenario.from_file(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = args.out or sc.raw.get("output_dir") or str(Path("out") / sc.name)
    try:
        report = run_scenario(sc, out, seed=args.seed,
                              normalize=args.normalize_report)
    except (ScenarioError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"report": str(Path(out) / "report.json"),
                      "exit_code": report["exit_code"],
                      "flags": report["flags"]}, sort_keys=True))
    return int(report["exit_code"])


def _cmd_validate_operator(args) -> int:
    try:
        op = load_operator(args.operator)
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"error: cannot load operator: {exc}", file=sys.stderr)
        return 1
    rep = check_structure(op, samples=args.samples, seed=args.seed)
    print(json.dumps(rep.to_dict(), sort_keys=True, indent=1))
    return 0 if rep.passed else 2


def _cmd_compare(args) -> int:
    try:
        rep_a = json.loads(Path(args.report_a).read_text(encoding="utf-8"))
        rep_b = json.loads(Path(args.report_b).read_text(encoding="utf-8"))
        diff = compare_reports(rep_a, rep_b)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(diff, sort_keys=True, indent=1))
    return 0


def _cmd_dump_info(args) -> int:
    try:
        with open(args.dump, "rb") as f:
            header = json.loads(f.readline().decode("utf-8"))
    except (OSError, ValueError) as exc:
        print(f"error: cannot read dump header: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(header, sort_keys=True, indent=1))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {
        "run": _cmd_run,
        "validate-operator": _cmd_validate_operator,
        "compare": _cmd_compare,
        "dump-info": _cmd_dump_info,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
