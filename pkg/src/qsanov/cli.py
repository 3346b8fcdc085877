"""Command line entry point: ``qsanov <experiment> --config cfg.json``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as E
from .errors import ConfigError, QsanovError

SUBCOMMANDS = {
    "stein": "stein",
    "sanov": "sanov",
    "aep": "aep",
    "mixing": "mixing_audit",
    "stationary": "stationary",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsanov", description="Run a hypothesis-testing exponent experiment.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run a {SUBCOMMANDS[name]} experiment")
        p.add_argument("--config", required=True, help="experiment configuration (JSON)")
        p.add_argument("--out", help="output file; overrides out_path from the config")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--max-dim", type=int, help="override the dense dimension guard")
        p.add_argument("--format", choices=E.FORMATS, help="output format")
        p.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    return parser


def _load(args) -> E.ExperimentConfig:
    path = Path(args.config)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"{path} is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    for key, val in (("seed", args.seed), ("max_dim", args.max_dim), ("format", args.format)):
        if val is not None:
            raw[key] = val
    cfg = E.parse_config(raw, path.parent)
    if args.out:
        cfg = replace(cfg, out_path=args.out)
    expected = SUBCOMMANDS[args.command]
    if cfg.kind != expected:
        raise ConfigError("kind", f"config describes {cfg.kind!r} but subcommand {args.command!r} was given")
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        result = E.run(cfg)
        out = E.emit(result.records, cfg)
    except (QsanovError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(f"{cfg.kind}: {len(result.records)} rows -> {out}")
        for msg in result.failures:
            print(f"check failed: {msg}")
    return 0 if result.passed else 2


if __name__ == "__main__":
    sys.exit(main())
