"""Command-line entry point.

    l96calib <command> [--profile paper|smoke] [--config FILE] [--seed N]
                       [--out DIR] [--<dotted.key> VALUE ...]

Commands: simulate, scan, eki, mcmc, fast, validate.  Any config key can
be overridden with a flag of the same dotted name, e.g. --system.K 16.
--config also accepts a manifest.json from a previous run, which replays
that run's configuration.

Exit codes: 0 success, 2 validation failure, 3 trajectory blow-up,
4 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from ..dynamics import BlowUpError
from .commands import COMMANDS
from .config import SCHEMA, ConfigError, build_config

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BLOWUP = 3
EXIT_CONFIG = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse exits with 2 by default, which collides with the
        # validation-failure code; surface usage problems as config errors.
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="l96calib", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, prog=f"l96calib {name}")
        sp.add_argument("--config", default=None,
                        help="key=value config file or a manifest.json to replay")
        sp.add_argument("--profile", choices=("paper", "smoke"), default="paper")
        sp.add_argument("--seed", type=int, default=None, help="master seed override")
        sp.add_argument("--out", default=None, help="output directory (default out/<command>)")
        for key in SCHEMA:
            if key == "seed":
                continue
            sp.add_argument(f"--{key}", dest=key, default=None, metavar="VALUE")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        overrides = {k: v for k, v in vars(args).items()
                     if k in SCHEMA and v is not None}
        cfg = build_config(profile=args.profile, config_file=args.config,
                           overrides=overrides, seed=args.seed)
        out = args.out if args.out is not None else f"out/{args.command}"
        return COMMANDS[args.command](cfg, out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as e:
        print(f"blow-up abort: {e}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
