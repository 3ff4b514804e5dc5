"""Command-line front end.

Subcommands mirror the study kinds:

    uwdg project   --config study.cfg [--out table.csv] [--format csv|json]
    uwdg converge  --config study.cfg ...
    uwdg energy    --config study.cfg ...
    uwdg soliton   --config study.cfg ...
    uwdg diagnose  --config study.cfg ...
    uwdg paper-tables [--only t01 ...] [--jobs n]

Exit codes: 0 success, 2 configuration/validation failure, 3 numerical
failure (non-existent projection, singular or ill-conditioned solve).
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import parse_config
from .errors import (
    ConditioningError,
    ConfigError,
    NonexistentProjectionError,
    SingularSystemError,
)
from .studies import (
    StudyTable,
    diagnose_cmd,
    energy_csv,
    reference_suite,
    run_convergence_study,
    run_energy_study,
    run_projection_study,
    run_soliton,
    soliton_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _add_common(sub):
    sub.add_argument("--config", required=True, help="study configuration file")
    sub.add_argument("--out", help="output path (default: stdout)")
    sub.add_argument("--format", choices=("csv", "json"), default=None)
    sub.add_argument("--jobs", type=int, default=1, help="concurrent study legs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="uwdg",
        description="Ultra-weak DG studies for the 1D nonlinear Schrodinger equation",
    )
    subs = ap.add_subparsers(dest="command", required=True)
    for name in ("project", "converge", "energy", "soliton", "diagnose"):
        _add_common(subs.add_parser(name))
    pt = subs.add_parser("paper-tables", help="run the bundled reference suite")
    pt.add_argument("--only", nargs="*", help="substring filters on study names")
    pt.add_argument("--jobs", type=int, default=1)
    pt.add_argument("--out", help="write the JSON report here")
    return ap


def _emit(text: str, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _table_output(table: StudyTable, fmt: str) -> str:
    return table.to_json() if fmt == "json" else table.to_csv()


def _run(args) -> int:
    if args.command == "paper-tables":
        report = reference_suite(only=args.only, jobs=args.jobs)
        lines = []
        for name, res in report["studies"].items():
            lines.append(f"{'PASS' if res['passed'] else 'FAIL'}  {name}")
            for c in res["checks"]:
                if not c["ok"]:
                    lines.append(f"    bad {c['kind']}: measured {c['measured']:.4g} vs expected {c['expected']:.4g}")
        lines.append("overall: " + ("PASS" if report["passed"] else "FAIL"))
        print("\n".join(lines))
        if args.out:
            _emit(json.dumps(report, indent=2, default=float), args.out)
        return EXIT_OK if report["passed"] else EXIT_NUMERICAL

    cfg = parse_config(args.config)
    fmt = args.format or cfg.get("format", "csv")
    if args.command == "project":
        table = run_projection_study(cfg, jobs=args.jobs)
        _emit(_table_output(table, fmt), args.out or cfg.get("out"))
    elif args.command == "converge":
        table = run_convergence_study(cfg, jobs=args.jobs)
        _emit(_table_output(table, fmt), args.out or cfg.get("out"))
    elif args.command == "energy":
        res = run_energy_study(cfg)
        if fmt == "json":
            payload = dict(res["summary"])
            _emit(json.dumps(payload, indent=2), args.out or cfg.get("out"))
        else:
            _emit(energy_csv(res), args.out or cfg.get("out"))
        print(
            f"|E(0) - E(T)| = {res['summary']['energy_drop']:.3e}; "
            f"L2-norm change = {res['summary']['norm_drop']:.3e}",
            file=sys.stderr,
        )
    elif args.command == "soliton":
        res = run_soliton(cfg)
        if fmt == "json":
            _emit(json.dumps(res["summary"], indent=2), args.out or cfg.get("out"))
        else:
            _emit(soliton_csv(res), args.out or cfg.get("out"))
    elif args.command == "diagnose":
        res = diagnose_cmd(cfg)
        _emit(json.dumps(res, indent=2), args.out or cfg.get("out"))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonexistentProjectionError, SingularSystemError, ConditioningError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
