"""Command-line front end: run extraction jobs, seed checkpoints, and
generate toy datasets.

Exit codes: 0 success, 1 usage error, 2 data/I-O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Callable, Sequence

from .dataset import make_synthetic_dataset
from .extract import run_extraction
from .jobs import parse_job_file
from .model import SUPPORTED_ARCHS, init_checkpoint

__version__ = "0.1.0"


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits 1 (not 2) on usage errors."""

    def error(self, message: str) -> None:  # noqa: D401 - argparse hook
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _cmd_run(args: argparse.Namespace) -> int:
    job = parse_job_file(args.config)
    if args.output is not None:
        from dataclasses import replace

        job = replace(job, output=Path(args.output))
    result = run_extraction(job)
    print(
        f"wrote {result.output}: {result.num_objects} objects, "
        f"{result.feature_dim} feature dims, {result.num_classes} classes, "
        f"levels {list(result.levels_used)}"
    )
    return 0


def _cmd_init_checkpoint(args: argparse.Namespace) -> int:
    path = init_checkpoint(args.arch, args.seed, args.output)
    print(f"wrote {path} (arch={args.arch}, seed={args.seed})")
    return 0


def _cmd_make_dataset(args: argparse.Namespace) -> int:
    annotations = make_synthetic_dataset(
        args.output_dir, args.images, args.classes, args.seed
    )
    print(f"wrote {annotations} (+ images/)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="detrank-extract",
        description="Extract per-object detector features into feature "
        "bundles for transferability scoring.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("run", help="execute one key=value job config")
    p.add_argument("--config", required=True, help="job config file")
    p.add_argument("--output", help="override the config's output path")
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser(
        "init-checkpoint", help="write a seeded random-init backbone checkpoint"
    )
    p.add_argument("--arch", default="resnet18", choices=SUPPORTED_ARCHS)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(handler=_cmd_init_checkpoint)

    p = sub.add_parser(
        "make-dataset", help="generate a tiny synthetic detection dataset"
    )
    p.add_argument("--images", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(handler=_cmd_make_dataset)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except ValueError as exc:
        print(f"detrank-extract: data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"detrank-extract: i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
