"""Command-line entry points for the embedding extractor."""

from __future__ import annotations

import argparse
import logging
import sys

from .encoder import DEFAULT_EMBED_DIM, build_random_checkpoint
from .extract import extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uqembed",
        description="Frozen-encoder audio embedding extraction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_extract = sub.add_parser("extract", help="embed a directory of WAV files")
    p_extract.add_argument("--audio-dir", required=True)
    p_extract.add_argument("--checkpoint", required=True)
    p_extract.add_argument("--out", required=True, help="output features CSV")

    p_build = sub.add_parser("build-checkpoint",
                             help="write a random frozen-encoder checkpoint")
    p_build.add_argument("--out", required=True)
    p_build.add_argument("--seed", type=int, default=0)
    p_build.add_argument("--dim", type=int, default=DEFAULT_EMBED_DIM)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "extract":
            extract(args.audio_dir, args.checkpoint, args.out)
        else:
            build_random_checkpoint(args.out, seed=args.seed, embed_dim=args.dim)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
