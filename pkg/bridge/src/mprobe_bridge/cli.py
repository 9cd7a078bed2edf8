"""Launch command: ``mprobe-bridge serve --config server.json``."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import ServerConfig
from .server import serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mprobe-bridge")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="serve one condition over MPROBE/1")
    p.add_argument("--config", required=True, help="server config JSON")
    p.add_argument("--stdio", action="store_true",
                   help="serve on standard streams regardless of the config")
    p.add_argument("--ready-file", default=None,
                   help="write the bound TCP endpoint here once listening")

    p = sub.add_parser("init", help="write a stub-pipeline config with defaults")
    p.add_argument("--out", default="bridge.json")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "init":
        ServerConfig().save(args.out)
        print(f"wrote {args.out}")
        return 0
    try:
        config = ServerConfig.load(args.config)
    except (OSError, ValueError) as exc:
        print(f"mprobe-bridge: bad config: {exc}", file=sys.stderr)
        return 1
    if args.stdio:
        config.listen = "stdio"

    ready_callback = None
    if args.ready_file:
        def ready_callback(endpoint, path=args.ready_file):
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(endpoint + "\n")

    try:
        serve(config, ready_callback)
    except KeyboardInterrupt:
        pass
    return 0


def entrypoint() -> None:
    sys.exit(main())
