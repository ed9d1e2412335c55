"""Command-line entry point.

    maxrate <experiment> --config cfg.json [--seed S] [--threads N] [--out DIR] [--resume]

Experiments: spectrum, sweep, directional-sweep, sdp-sweep, pattern, pairs,
product-state, fit, validate.  Exit codes: 0 success, 2 config error,
3 numerical failure.
"""

import argparse
import json
import sys

from . import harness
from .errors import ArchiveError, ConfigError, MaxrateError


def build_parser():
    parser = argparse.ArgumentParser(prog="maxrate", description=__doc__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in harness.EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--threads", default=None, help="worker count or 'auto'")
        p.add_argument("--out", default=None, help="override output_dir")
        p.add_argument("--resume", action="store_true", help="continue a partial run")
    return parser


def load_config(args):
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    cfg.setdefault("experiment", args.experiment)
    if cfg["experiment"] != args.experiment:
        raise ConfigError(
            f"config experiment {cfg['experiment']!r} does not match subcommand {args.experiment!r}")
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    if args.out is not None:
        cfg["output_dir"] = args.out
    if args.threads is not None:
        cfg["threads"] = args.threads if args.threads == "auto" else int(args.threads)
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        diags = harness.validate_config(cfg)
        if args.experiment == "validate":
            if diags:
                for d in diags:
                    print(f"invalid: {d}")
                return 2
            print("ok")
            return 0
        if diags:
            for d in diags:
                print(f"config error: {d}", file=sys.stderr)
            return 2
        outdir = harness.run(cfg, resume=args.resume)
        print(f"run archive: {outdir}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ArchiveError as exc:
        print(f"archive error: {exc}", file=sys.stderr)
        return 2
    except MaxrateError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
