"""CLI: `lingagg-extract extract --job job.json` runs an extraction job;
`make-checkpoint` materializes a randomly initialized Base-architecture
checkpoint for pipelines without download access."""

from __future__ import annotations

import argparse
import sys

from .features import make_untrained_checkpoint
from .job import ExtractionJob, run_job


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lingagg-extract",
                                     description="SSL checkpoint -> Layered Feature Archive")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="run an extraction job")
    p.add_argument("--job", required=True, help="job spec JSON")
    p.set_defaults(func=lambda a: print(run_job(ExtractionJob.from_json(a.job))))

    p = sub.add_parser("make-checkpoint", help="write an untrained Base-architecture checkpoint")
    p.add_argument("--arch", default="wav2vec2-base",
                   choices=("wav2vec2-base", "hubert-base", "wavlm-base"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=lambda a: print(make_untrained_checkpoint(a.arch, a.out, a.seed)))

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
        return 0
    except (ValueError, OSError, KeyError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
