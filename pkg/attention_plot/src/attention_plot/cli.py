"""Single-shot command line: attention-plot <dump.jsonl> <out.png|out.svg>."""

from __future__ import annotations

import argparse
import sys

from .plot import DumpFormatError, plot


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="attention-plot", description=__doc__)
    parser.add_argument("dump", help="attention dump (JSON lines)")
    parser.add_argument("out", help="output image; format follows the extension")
    args = parser.parse_args(argv)
    try:
        out = plot(args.dump, args.out)
    except (DumpFormatError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(out)
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
