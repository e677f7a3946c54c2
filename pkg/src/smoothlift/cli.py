"""Command line: ``smoothlift <experiment> [flags]`` and ``smoothlift report FILES``.

Exit status is 0 when every threshold passes, 1 when any fails (or there is
no data to judge), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    EXPERIMENTS, ConfigError, ExperimentConfig, RunRecord, VersionMismatch,
    format_report, load_constants, report, run,
)


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smoothlift", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--k", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--m", type=int)
        p.add_argument("--kappa", type=float)
        p.add_argument("--trials", type=int)
        p.add_argument("--delta", type=float)
        p.add_argument("--grid", type=int)
        p.add_argument("--u-override", type=int)
        p.add_argument("--seed", type=_seed, default=0)
        p.add_argument("--out")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--fix-inner", action="store_true")
        p.add_argument("--tie-rule", choices=("random", "+1", "-1"), default="random")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--constants", help="constants file (overrides $SMOOTHLIFT_CONSTANTS)")
    rep = sub.add_parser("report", help="acceptance table from JSON records")
    rep.add_argument("records", nargs="+", help="record files (.json or .summary.json)")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    fields = {k: v for k, v in vars(args).items() if k not in ("command", "constants")}
    return ExperimentConfig.from_dict({"experiment": args.command, **fields})


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.command == "report":
        try:
            records = []
            for path in args.records:
                with open(path, encoding="utf-8") as fh:
                    records.append(RunRecord.from_dict(json.load(fh)))
            rows = report(records)
        except (OSError, KeyError, ValueError) as exc:
            print(f"smoothlift: {exc}", file=sys.stderr)
            return 2 if not isinstance(exc, VersionMismatch) else 1
        print(format_report(rows))
        return 1 if any(r.status == "fail" for r in rows) else 0
    try:
        constants = load_constants(args.constants)
        record = run(config_from_args(args), constants)
    except ConfigError as exc:
        print(f"smoothlift: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"summary": record.summary,
                      "checks": [{"name": c.name, "passed": c.passed, "observed": c.observed,
                                  "threshold": c.threshold} for c in record.checks]}, indent=2))
    return 0 if record.passed else 1


if __name__ == "__main__":
    sys.exit(main())
