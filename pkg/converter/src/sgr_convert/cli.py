"""Command line front end.

Exit codes: 0 success, 2 bad arguments, 3 download failure (safe to retry),
4 source parse failure, 5 validation failure.
"""

from __future__ import annotations

import argparse
import sys

from .convert import TABLE8, convert
from .errors import DownloadError, SourceFormatError, ValidationError
from .sources import DATASETS
from .verify import verify


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgr-convert",
        description="Fetch public graph benchmarks and emit .sgr1 files.")
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("convert", help="download, normalize, and emit")
    group = conv.add_mutually_exclusive_group(required=True)
    group.add_argument("--dataset", choices=sorted(DATASETS))
    group.add_argument("--all", action="store_true",
                       help="convert every known dataset")
    conv.add_argument("--out", required=True, help="output directory")
    conv.add_argument("--source-dir", default=None,
                      help="cache directory for raw downloads "
                           "(default: <out>/sources)")
    conv.add_argument("--no-download", action="store_true",
                      help="fail instead of fetching missing source files")

    ver = sub.add_parser("verify", help="re-validate an emitted .sgr1 file")
    ver.add_argument("path")
    ver.add_argument("--manifest", default=None,
                     help="manifest.json recording stripped self-loops "
                          "(default: next to the file)")
    return parser


def _cmd_convert(args: argparse.Namespace) -> int:
    names = sorted(DATASETS) if args.all else [args.dataset]
    for name in names:
        manifest = convert(name, args.out, source_dir=args.source_dir,
                           download=not args.no_download)
        note = ""
        if manifest.self_loops_stripped:
            note = f" ({manifest.self_loops_stripped} self-loops stripped)"
        print(f"{name}: {manifest.nodes} nodes, "
              f"{manifest.directed_edges} directed edges, "
              f"{manifest.features} features, "
              f"{manifest.classes} classes{note}")
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    summary = verify(args.path, manifest_path=args.manifest)
    print(f"{args.path}: ok ({summary['nodes']} nodes, "
          f"{summary['directed_edges']} directed edges, "
          f"published counts: {summary['published_counts']})")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "convert":
            return _cmd_convert(args)
        return _cmd_verify(args)
    except DownloadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SourceFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
