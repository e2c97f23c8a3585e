"""Command line entry points: seqdyn run / list / verify."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .errors import ConfigError, MinorationError, ResourceLimitError, SeqdynError
from . import runner

EXIT_CODES = {
    ConfigError: 2,
    ResourceLimitError: 3,
    MinorationError: 4,
    SeqdynError: 5,
}


def _fail(exc: BaseException) -> int:
    doc = {"error_class": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        doc["violations"] = exc.violations
    print(json.dumps(doc), file=sys.stderr)
    for klass, code in EXIT_CODES.items():
        if isinstance(exc, klass):
            return code
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqdyn",
                                     description="Sequential interval dynamics experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config (TOML or JSON)")
    p_run.add_argument("config", help="path to the config file")
    p_run.add_argument("--out", default=None, help="output directory (default: $SEQDYN_OUT_DIR or ./results)")
    p_run.add_argument("--threads", type=int, default=1,
                       help="worker hint; results are identical for any value")
    p_run.add_argument("--seed-override", type=int, default=None)

    p_list = sub.add_parser("list", help="list scenarios and what each verifies")
    p_list.add_argument("--json", action="store_true")

    p_verify = sub.add_parser("verify", help="re-run a record and diff its rows")
    p_verify.add_argument("record", help="path to a JSON record")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            print(runner.list_scenarios(as_json=args.json))
            return 0
        if args.command == "run":
            config = runner.ExperimentConfig.from_file(args.config)
            if args.seed_override is not None:
                config = dataclasses.replace(config, seed=args.seed_override)
            record = runner.run(config, out_dir=args.out)
            print(json.dumps({"csv": record.csv_path, "json": record.json_path,
                              "fitted": record.fitted,
                              "warnings": record.warnings,
                              "wall_clock_s": record.wall_clock_s}, indent=2))
            return 0
        if args.command == "verify":
            ok, message = runner.verify(args.record)
            print(json.dumps({"identical": ok, "detail": message}))
            return 0 if ok else 1
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(SeqdynError(str(exc)))
    except SeqdynError as exc:
        return _fail(exc)
    except Exception as exc:  # pragma: no cover - defensive
        return _fail(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
