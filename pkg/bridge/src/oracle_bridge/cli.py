"""Bridge command line: serve the wire protocol or pre-dump an oracle cache."""

from __future__ import annotations

import argparse
import json
import sys

from .config import BridgeConfig, BridgeConfigError
from .dump import dump_cache
from .server import serve


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oracle-bridge")
    parser.add_argument("--config", type=str, required=True, help="JSON bridge config")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("serve", help="run the /v1/logits server")
    p_dump = sub.add_parser("dump-cache", help="pre-answer a dataset into a cache file")
    p_dump.add_argument("--data", type=str, required=True, help="dataset JSONL")
    p_dump.add_argument("--out", type=str, required=True, help="cache JSONL to write")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = BridgeConfig.from_file(args.config)
    except BridgeConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "serve":
        serve(config)
        return 0
    manifest = dump_cache(args.data, config, args.out)
    print(json.dumps(manifest))
    return 0 if not manifest["missing"] else 1


if __name__ == "__main__":
    sys.exit(main())
