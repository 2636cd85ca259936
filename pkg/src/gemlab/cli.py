"""Command-line entry point: ``gemlab <subcommand> --config FILE``.

Exit codes: 0 success, 1 stage failure, 2 invalid config or usage,
3 an ``--assert`` threshold failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .config import ConfigError, load_config
from .runner import StageError, run

SUBCOMMANDS = {
    "simulate": ("simulate", "simulate-4wm"),
    "raman": ("raman",),
    "decay-fit": ("decay-fit",),
    "tomography": ("tomography",),
    "tv": ("tv",),
    "compare": ("compare",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gemlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(SUBCOMMANDS) + ["validate"]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment description")
        if name == "validate":
            continue
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--assert", dest="enforce", action="store_true",
                       help="exit non-zero if a threshold in the config's assert block fails")
        p.add_argument("--plotdata", action="store_true", help="also write plot-data CSVs")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print(json.dumps(cfg.resolved(), indent=2, sort_keys=True))
        return 0
    if cfg.kind not in SUBCOMMANDS[args.command]:
        print(f"config error: kind '{cfg.kind}' cannot run under '{args.command}'", file=sys.stderr)
        return 2
    if args.seed is not None and args.seed < 0:
        print("config error: --seed must be non-negative", file=sys.stderr)
        return 2
    try:
        manifest, report = run(cfg, args.out, seed=args.seed, plotdata=args.plotdata,
                               enforce_asserts=args.enforce)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(manifest.metrics, indent=2, sort_keys=True))
    if report is not None and not report["passed"]:
        print(json.dumps(report, indent=2, sort_keys=True), file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
