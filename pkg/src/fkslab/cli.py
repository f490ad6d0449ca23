"""Command line entry point: ``fkslab <subcommand> [--config FILE] [--flag value ...]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .harness import (DEFAULTS, EXIT_CAP, EXIT_CONFIG, SUBCOMMANDS, ConfigError, report, run, schema)
from .oracle import CapExceeded

SEED_ENV = "SEED"


def _color(text, code):
    if os.environ.get("NO_COLOR") or not sys.stderr.isatty():
        return text
    return f"\033[{code}m{text}\033[0m"


def _parse_value(name, raw):
    kinds = schema()["properties"][name].get("type", "string")
    kinds = [kinds] if isinstance(kinds, str) else kinds
    if raw == "null" and "null" in kinds:
        return None
    if "array" in kinds or "boolean" in kinds:
        return json.loads(raw)
    if "integer" in kinds:
        try:
            return int(raw)
        except ValueError:
            pass
    if "number" in kinds or "integer" in kinds:
        return float(raw)
    return raw


def build_parser():
    ap = argparse.ArgumentParser(prog="fkslab", description=__doc__)
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("run_path", nargs="?", help="run directory (report only)")
    ap.add_argument("--config", help="JSON config file; flags override its entries")
    ap.add_argument("-v", "--verbose", action="store_true")
    for name in DEFAULTS:
        ap.add_argument(f"--{name.replace('_', '-')}", dest=name, default=None, metavar="VALUE")
    return ap


def load_config(args):
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
    if SEED_ENV in os.environ:
        cfg["seed"] = int(os.environ[SEED_ENV])
    for name in DEFAULTS:
        raw = getattr(args, name)
        if raw is not None:
            cfg[name] = _parse_value(name, raw)
    cfg["subcommand"] = args.subcommand
    return cfg


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.subcommand == "report":
        if not args.run_path:
            print("report needs a run directory", file=sys.stderr)
            return EXIT_CONFIG
        print(report(args.run_path))
        return 0
    try:
        cfg = load_config(args)
        record = run(cfg)
    except ConfigError as err:
        for problem in err.problems:
            print(_color("config error: ", "31") + problem, file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, json.JSONDecodeError) as err:
        if isinstance(err, CapExceeded):
            print(_color("cap exceeded: ", "33") + str(err), file=sys.stderr)
            return EXIT_CAP
        print(_color("config error: ", "31") + str(err), file=sys.stderr)
        return EXIT_CONFIG
    print(record.csv, end="")
    print(_color(f"run directory: {record.run_dir}", "32"), file=sys.stderr)
    return record.exit_code


if __name__ == "__main__":
    sys.exit(main())
