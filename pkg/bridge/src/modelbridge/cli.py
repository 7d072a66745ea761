"""Entry point: ``model-bridge serve --config PATH [--echo-toy SEED]``."""

from __future__ import annotations

import argparse
import sys

from .config import BridgeConfig, ConfigError, load_config
from .server import serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="model-bridge")
    sub = parser.add_subparsers(dest="command", required=True)
    cmd = sub.add_parser("serve", help="answer protocol requests on stdin/stdout")
    cmd.add_argument("--config", default=None, help="bridge config (.json)")
    cmd.add_argument(
        "--echo-toy",
        type=int,
        default=None,
        metavar="SEED",
        help="serve the analytic echo model seeded with SEED instead of loading models",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.config is None and args.echo_toy is None:
        print("model-bridge: --config is required unless --echo-toy is given", file=sys.stderr)
        return 2
    try:
        config = load_config(args.config) if args.config else BridgeConfig()
    except ConfigError as exc:
        print(f"model-bridge: {exc}", file=sys.stderr)
        return 2
    return serve(config, echo_seed=args.echo_toy)


if __name__ == "__main__":
    sys.exit(main())
