"""Command-line entry point.

Exit codes: 0 success, 2 unreadable input or config, 3 numerical failure,
4 physics violation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import pipelines
from .config import ConfigError, dump_config, load_config, parse_override
from .core import ModelError, PhysicsViolationError
from .data import GenerationError, ParseError

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC, EXIT_PHYSICS = 0, 2, 3, 4

COMMANDS = ("generate-gas", "generate-building", "train", "evaluate", "check-physics",
            "baseline-arx", "baseline-node")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcnode", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
        p.add_argument("--config", type=Path, help="flat YAML file with run settings")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out", type=Path, required=True, help="run directory")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a single config key (repeatable)")
    return parser


def _resolve(args):
    overrides = dict(parse_override(o) for o in args.overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.command == "baseline-node":
        overrides["model"] = "vanilla"
    return load_config(args.command, args.config, overrides)


def run(args) -> int:
    cfg = _resolve(args)
    out = args.out
    if args.command == "generate-gas":
        dump_config(cfg, out / "config.resolved.yaml")
        files = pipelines.generate_gas(cfg, out)
        print("\n".join(str(p) for p in files.values()))
        return EXIT_OK
    if args.command == "generate-building":
        dump_config(cfg, out / "config.resolved.yaml")
        files = pipelines.generate_building(cfg, out)
        print("\n".join(str(p) for p in files.values()))
        return EXIT_OK
    if args.command in ("train", "baseline-node"):
        ckpt, aborted = pipelines.run_train(cfg, out)
        if aborted:
            print(f"training aborted: {aborted}", file=sys.stderr)
            return EXIT_NUMERIC
        best = ckpt.history[-1]["best_val_loss"] if ckpt.history else float("nan")
        print(f"checkpoint {out / 'checkpoint.json'} best val loss {best:.6g}")
        return EXIT_OK
    if args.command == "baseline-arx":
        model = pipelines.run_arx(cfg, out)
        print(f"arx {out / 'arx.json'} lags {model.lags}" + (" (rank deficient)" if model.rank_deficient else ""))
        return EXIT_OK
    if args.command == "evaluate":
        metrics = pipelines.run_evaluate(cfg, out)
        print(json.dumps(metrics["series"], indent=1, sort_keys=True))
        return EXIT_OK
    if args.command == "check-physics":
        report = pipelines.run_check_physics(cfg, out)
        for key in ("parameters", "energy", "entropy_rate", "monotonicity", "entropy_decrease_steps"):
            if key in report:
                entry = dict(report[key])
                status = entry.pop("status")
                print(f"{key}: {status} {json.dumps(entry, sort_keys=True)}")
        if not report["passed"]:
            for f in report["failures"]:
                print(f"violation: {f}", file=sys.stderr)
            return EXIT_PHYSICS
        return EXIT_OK
    raise AssertionError(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (ConfigError, ParseError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError,
            yaml.YAMLError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except PhysicsViolationError as err:
        print(f"physics violation: {err}", file=sys.stderr)
        return EXIT_PHYSICS
    except (ModelError, GenerationError, ArithmeticError, ValueError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
