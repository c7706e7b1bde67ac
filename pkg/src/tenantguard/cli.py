"""Command line: ``tenantguard audit|remediate|validate --scenario DIR``.

Exit codes: 0 clean, 2 findings (or a non-empty plan under ``--check``), 1 tool error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__
from .attacks import AttackId, audit_all
from .manifest import ParseError, ScenarioError, load_scenario, read_scenario, save_scenario
from .model import validate_scenario
from .remediation import RemediationError, apply_plan, emit_remediation_script, plan_remediation
from .report import render_report

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FINDINGS = 2

PLAN_SCRIPT = "remediation.sh"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; 2 is reserved for findings here
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tenantguard", description="Audit cross-tenant isolation of a shared web hosting server.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    audit = sub.add_parser("audit", help="report feasible attacks")
    audit.add_argument("--scenario", required=True, type=Path)
    audit.add_argument("--format", choices=("text", "json"), default="text")
    audit.add_argument("--attack", action="append", help="restrict to an attack id (A5 or A5_LogPoisoning); repeatable")

    rem = sub.add_parser("remediate", help="generate the isolation plan")
    rem.add_argument("--scenario", required=True, type=Path)
    rem.add_argument("--out", type=Path, help=f"write {PLAN_SCRIPT} and the remediated scenario here")
    rem.add_argument("--check", action="store_true", help="exit 2 when the plan is not empty")

    val = sub.add_parser("validate", help="list scenario invariant violations")
    val.add_argument("--scenario", required=True, type=Path)
    return parser


def _use_color(stream) -> bool:
    if os.environ.get("TENANTGUARD_NO_COLOR"):
        return False
    return hasattr(stream, "isatty") and stream.isatty()


def _load(path: Path):
    try:
        return load_scenario(path)
    except ScenarioError as exc:
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        raise


def _cmd_audit(args) -> int:
    attacks = [AttackId.parse(a) for a in args.attack] if args.attack else None
    report = audit_all(_load(args.scenario), attacks)
    sys.stdout.write(render_report(report, args.format, color=_use_color(sys.stdout)))
    return EXIT_FINDINGS if report.findings else EXIT_OK


def _cmd_remediate(args) -> int:
    s = _load(args.scenario)
    plan = plan_remediation(s)
    script = emit_remediation_script(plan)
    if args.out is not None:
        save_scenario(apply_plan(s, plan), args.out)
        (args.out / PLAN_SCRIPT).write_text(script, encoding="utf-8")
        print(f"{len(plan.actions)} action(s); wrote {args.out / PLAN_SCRIPT} and remediated scenario")
    else:
        sys.stdout.write(script)
    if args.check and plan.actions:
        return EXIT_FINDINGS
    return EXIT_OK


def _cmd_validate(args) -> int:
    violations = validate_scenario(read_scenario(args.scenario))
    for v in violations:
        print(v)
    if not violations:
        print("valid")
        return EXIT_OK
    return EXIT_FINDINGS


_COMMANDS = {"audit": _cmd_audit, "remediate": _cmd_remediate, "validate": _cmd_validate}


def run_cli(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except (ScenarioError, ParseError, RemediationError, ValueError, OSError) as exc:
        print(f"tenantguard: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main(argv=None) -> int:
    return run_cli(argv)
