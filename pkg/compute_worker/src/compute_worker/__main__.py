"""Entry point: announce the protocol version, then serve stdin forever."""

from __future__ import annotations

import argparse
import json
import sys

from .atomics import AtomicError, load_bundle, seed_registry
from .protocol import handle_line, handshake_line


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="compute-worker",
        description="Line-delimited JSON calculation worker over stdio.")
    parser.add_argument("--bundle", action="append", default=[],
                        metavar="PATH",
                        help="atomic bundle file to load (repeatable)")
    args = parser.parse_args(argv)

    registry = seed_registry()
    for path in args.bundle:
        try:
            load_bundle(registry, path)
        except AtomicError as exc:
            # Refusing to start beats serving with half the advertised
            # calculations missing.
            print(f"compute-worker: {exc}", file=sys.stderr)
            return 1

    out = sys.stdout
    out.write(handshake_line() + "\n")
    out.flush()
    for line in sys.stdin:
        if not line.strip():
            continue
        response = handle_line(line, registry)
        out.write(json.dumps(response, sort_keys=True) + "\n")
        out.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
